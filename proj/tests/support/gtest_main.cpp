#include <gtest/gtest.h>

#include "puxp/allocator.hpp"

int main(int argc, char** argv) {
    puxp::configure_allocator();
    ::testing::InitGoogleTest(&argc, argv);
    return RUN_ALL_TESTS();
}
