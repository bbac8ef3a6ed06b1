#include "promptscape/cli.hpp"

int main(int argc, char** argv) { return promptscape::run_cli(argc, argv); }
