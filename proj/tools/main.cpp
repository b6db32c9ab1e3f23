#include <iostream>
#include <string>
#include <vector>

#include "conformer/commands.hpp"

int main(int argc, char** argv) {
  return conformer::run_cli(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
