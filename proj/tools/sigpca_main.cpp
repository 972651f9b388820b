#include <iostream>

#include "sigpca/cli.hpp"

int main(int argc, char** argv) { return sigpca::cli::main_entry(argc, argv, std::cout, std::cerr); }
