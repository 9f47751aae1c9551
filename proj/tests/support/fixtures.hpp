#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <iterator>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "puxp/geometry.hpp"
#include "puxp/parameter.hpp"
#include "puxp/random.hpp"
#include "puxp/tensor.hpp"

namespace puxp::testkit {

inline Tensor matrix(std::initializer_list<std::initializer_list<double>> rows, bool requires_grad = false) {
    std::vector<double> values;
    std::size_t cols = 0;
    for (const auto& row : rows) {
        cols = row.size();
        values.insert(values.end(), row.begin(), row.end());
    }
    return Tensor::from({rows.size(), cols}, std::move(values), requires_grad);
}

inline Tensor random_tensor(Shape shape, std::uint64_t seed, bool requires_grad = false) {
    Rng rng(seed);
    std::vector<double> values(shape.numel());
    for (double& v : values) v = rng.uniform(-1.0, 1.0);
    return Tensor::from(shape, std::move(values), requires_grad);
}

inline PointCloud random_cloud(std::size_t n, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    std::vector<Vec3> points(n);
    for (auto& p : points) p = {scale * rng.uniform(-1, 1), scale * rng.uniform(-1, 1), scale * rng.uniform(-1, 1)};
    return PointCloud(std::move(points));
}

/// Overwrites a registered parameter in place.
inline void set_param(const ParameterStore& store, std::string_view name, const std::vector<double>& values) {
    Tensor t = store.get(name).tensor;
    auto data = t.mutable_data();
    ASSERT_EQ(data.size(), values.size()) << name;
    std::copy(values.begin(), values.end(), data.begin());
}

inline void fill_param(const ParameterStore& store, std::string_view name, double value) {
    Tensor t = store.get(name).tensor;
    for (double& v : t.mutable_data()) v = value;
}

/// Identity matrix of size n flattened row-major.
inline std::vector<double> identity(std::size_t n) {
    std::vector<double> v(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) v[i * n + i] = 1.0;
    return v;
}

/// Fresh directory per test, removed by the caller's scope if desired.
inline std::filesystem::path scratch_dir() {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    auto dir = std::filesystem::temp_directory_path() /
               (std::string("puxp_") + info->test_suite_name() + "_" + info->name());
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream(path, std::ios::binary) << text;
}

inline std::vector<double> values(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

}  // namespace puxp::testkit
