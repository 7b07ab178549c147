#include <iostream>
#include <string>
#include <vector>

#include "eqdisc/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return eqdisc::cli::run(args, std::cout, std::cerr);
}
