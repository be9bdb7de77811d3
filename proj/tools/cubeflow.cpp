#include <iostream>

#include "cubeflow/cli/cli.hpp"

int main(int argc, char** argv) { return cubeflow::cli::run(argc, argv, std::cout, std::cerr); }
