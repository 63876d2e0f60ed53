#include <iostream>

#include "ccphot/cli.hpp"

int main(int argc, char** argv) { return ccphot::cli::main(argc, argv, std::cout, std::cerr); }
