// Command-line driver; subcommands are wired up in src as the pipeline lands.
#include <cstdio>

int main() {
  std::puts("implace: pipeline subcommands not wired yet");
  return 2;
}
