#include <iostream>

#include "cmebal/cli.hpp"

int main(int argc, char** argv) { return cmebal::cli::run(argc, argv, std::cout, std::cerr); }
