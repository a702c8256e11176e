#include <cstdio>

// placeholder until the CLI lands; real entry point lives in src/cli
int main(int argc, char** argv) {
  (void)argc;
  (void)argv;
  std::printf("procomp: CLI not wired up yet\n");
  return 1;
}
