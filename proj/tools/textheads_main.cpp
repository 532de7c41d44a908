#include <iostream>

#include "textheads/cli.hpp"

int main(int argc, char** argv) { return textheads::run(argc, argv, std::cout, std::cerr); }
