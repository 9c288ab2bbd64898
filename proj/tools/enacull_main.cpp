#include <iostream>

#include "enacull/cli.hpp"

int main(int argc, char** argv) { return enacull::cli::run(argc, argv, std::cout, std::cerr); }
