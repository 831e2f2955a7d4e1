#include "cli.hpp"

int main(int argc, char** argv) { return drmpc::cli_main(argc, argv); }
