#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include <spdlog/spdlog.h>

int main(int argc, char** argv) {
    // Expected warnings from error-path tests would drown the report.
    spdlog::set_level(spdlog::level::critical);
    doctest::Context context(argc, argv);
    return context.run();
}
