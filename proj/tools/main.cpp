#include "stacktag/toolkit.hpp"

int main(int argc, char** argv) {
  return stacktag::cli(std::vector<std::string>(argv + 1, argv + argc));
}
