#include <iostream>

#include "gcsich/cli.hpp"

int main(int argc, char** argv) { return gcsich::cli::dispatch(argc, argv, std::cout, std::cerr); }
