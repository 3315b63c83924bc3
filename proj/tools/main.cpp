#include <string>
#include <vector>

#include "qkd/cli/app.hpp"

int main(int argc, char** argv) {
  return qkd::cli_dispatch(std::vector<std::string>(argv, argv + argc));
}
