#include <cstdio>

int main() {
  std::fprintf(stderr, "bcw: command-line driver not wired up yet\n");
  return 2;
}
