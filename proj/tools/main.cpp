#include "crowdscene/cli.hpp"

int main(int argc, char** argv) { return crowdscene::run_cli(argc, argv); }
