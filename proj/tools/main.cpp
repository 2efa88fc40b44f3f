#include <string>
#include <vector>

#include "spatml/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return spatml::run_cli(args);
}
