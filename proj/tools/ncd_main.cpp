#include "ncdiff/cli.hpp"

int main(int argc, char** argv) { return ncdiff::run_ncd(argc, argv); }
