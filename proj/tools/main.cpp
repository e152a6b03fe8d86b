#include "stepcount/cli.h"

int main(int argc, char** argv) { return stepcount::run_cli(argc, argv); }
