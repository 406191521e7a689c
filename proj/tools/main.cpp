#include "virtlase/cli.hpp"

int main(int argc, char** argv)
{
    return virtlase::cli::run(argc, argv);
}
