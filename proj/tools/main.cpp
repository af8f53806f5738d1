#include "rsrl/harness.hpp"

int main(int argc, char** argv) { return rsrl::harness::run_cli(argc, argv); }
