#include <iostream>

#include "fiberspec/cli.hpp"

int main(int argc, char** argv) { return fiberspec::cli::run(argc, argv, std::cout, std::cerr); }
