#include "edgemask/cli.hpp"

int main(int argc, char** argv) { return edgemask::cli::run(argc, argv); }
