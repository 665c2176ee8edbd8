#include <iostream>

#include "mnad/cli.hpp"

int main(int argc, char** argv) { return mnad::cli::run(argc, argv, std::cout, std::cerr); }
