#include "heiskam/cli.hpp"

int main(int argc, char** argv) { return heiskam::dispatch(argc, argv); }
