#include <iostream>
#include <string>
#include <vector>

#include "cli.hpp"
#include "medrank/log.hpp"

int main(int argc, char** argv) {
  medrank::init_logging_from_env();
  std::vector<std::string> args(argv + 1, argv + argc);
  return medrank::cli::run_cli(args, std::cout, std::cerr);
}
