#include <iostream>

#include "tet/cli.hpp"

int main(int argc, char** argv) {
  return tet::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
