#include "forestllm/cli.hpp"

int main(int argc, char** argv) { return forestllm::cli_main(argc, argv); }
