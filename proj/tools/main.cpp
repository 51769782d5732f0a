#include <iostream>

#include "pghd/cli.hpp"

int main(int argc, char** argv) { return pghd::cli::run(argc, argv, std::cout, std::cerr); }
