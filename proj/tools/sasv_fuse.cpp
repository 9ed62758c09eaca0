#include "sasvfuse/cli.hpp"

int main(int argc, char** argv) { return sasvfuse::run_cli(argc, argv); }
