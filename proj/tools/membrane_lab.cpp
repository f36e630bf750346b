#include <string>
#include <vector>

#include "membrane/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return membrane::run_cli(args);
}
