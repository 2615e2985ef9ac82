#include <iostream>

#include "vocnet/cli.hpp"

int main(int argc, char** argv) {
  return vocnet::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
