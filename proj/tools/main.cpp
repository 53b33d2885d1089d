#include "clarity/cli.hpp"

int main(int argc, char** argv) { return clarity::cli::main_entry(argc, argv); }
