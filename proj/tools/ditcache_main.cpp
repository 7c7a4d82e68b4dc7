#include "ditcache/cli.hpp"

int main(int argc, char** argv) { return ditcache::cli_main(argc, argv); }
