#include <iostream>

#include "acousticpose/cli/commands.hpp"

int main(int argc, char** argv) { return acousticpose::cli::run(argc, argv, std::cout, std::cerr); }
