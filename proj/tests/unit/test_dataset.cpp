#include "balancekit/dataset.hpp"
#include "balancekit/error.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

using namespace balancekit;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "balancekit_test_dataset";
    fs::create_directories(dir);
    return dir / name;
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
    std::ofstream out(p, std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("concentric circles") {
    const Dataset exact = make_concentric_circles(4, 0.0, 1);
    REQUIRE(exact.size() == 4);
    for (std::size_t k = 0; k < 4; ++k) {
        const double r = std::hypot(exact.inputs[k][0], exact.inputs[k][1]);
        CHECK(r == doctest::Approx(exact.labels[k] == 0 ? 1.0 : 0.5).epsilon(1e-15));
    }
    const Dataset noisy = make_concentric_circles(501, 0.05, 7);
    const auto ones = std::count(noisy.labels.begin(), noisy.labels.end(), 1);
    CHECK(std::abs(static_cast<long>(noisy.size()) - 2 * ones) <= 1);
    const Dataset again = make_concentric_circles(501, 0.05, 7);
    CHECK(again.inputs == noisy.inputs);
    CHECK(again.labels == noisy.labels);
}

TEST_CASE("stratified subsample") {
    Dataset d;
    for (int c = 0; c < 10; ++c) for (int k = 0; k < 100; ++k) { d.inputs.push_back({double(c), double(k)}); d.labels.push_back(c); }
    const Dataset all = stratified_subsample(d, 1.0, 3);
    CHECK(all.inputs == d.inputs);
    const Dataset tiny = stratified_subsample(d, 0.01, 3);
    CHECK(tiny.size() == 10);
    for (int c = 0; c < 10; ++c) CHECK(std::count(tiny.labels.begin(), tiny.labels.end(), c) == 1);
    CHECK_THROWS_AS(stratified_subsample(d, 0.001, 3), InvalidArgument);

    Dataset big;
    for (int k = 0; k < 60000; ++k) { big.inputs.push_back({double(k)}); big.labels.push_back(k % 10); }
    const Dataset s = stratified_subsample(big, 0.01, 11);
    CHECK(s.size() == 600);
    for (int c = 0; c < 10; ++c) CHECK(std::count(s.labels.begin(), s.labels.end(), c) == 60);
    CHECK(stratified_subsample(big, 0.01, 11).inputs == s.inputs);
    for (std::size_t k = 1; k < s.size(); ++k) CHECK(s.inputs[k - 1][0] < s.inputs[k][0]);
}

TEST_CASE("IDX files") {
    const fs::path images = temp_file("img.idx");
    write_bytes(images, {0, 0, 0x08, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 2, 0, 255, 51, 102});
    const fs::path labels = temp_file("lbl.idx");
    write_bytes(labels, {0, 0, 0x08, 1, 0, 0, 0, 2, 3, 7});
    const Dataset d = load_idx(images, labels);
    REQUIRE(d.size() == 2);
    CHECK(d.inputs[0] == std::vector<double>{0.0, 1.0});
    CHECK(d.inputs[1] == std::vector<double>{51 / 255.0, 102 / 255.0});
    CHECK(d.labels == std::vector<int>{3, 7});

    const fs::path bad = temp_file("bad.idx");
    write_bytes(bad, {0, 0, 0x08, 3, 0, 0, 0, 2, 0, 0, 0, 1, 0, 0, 0, 2, 0, 255});
    try {
        (void)load_idx(bad);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.position() == 18);
    }
    write_bytes(bad, {1, 0, 0x08, 1, 0, 0, 0, 0});
    CHECK_THROWS_AS(load_idx(bad), ParseError);
}

TEST_CASE("CSV files") {
    const fs::path p = temp_file("three.csv");
    {
        std::ofstream out(p);
        out << "x,label,y\n0.5,1,2\n-1,0,3.25\n2,1,0\n";
    }
    const Dataset d = load_csv(p);
    REQUIRE(d.size() == 3);
    CHECK(d.labels == std::vector<int>{1, 0, 1});
    CHECK(d.inputs[1] == std::vector<double>{-1.0, 3.25});

    {
        std::ofstream out(p);
        out << "label,x\n1,2\n0,oops\n";
    }
    try {
        (void)load_csv(p);
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.position() == 3);
    }

    const Dataset circles = make_concentric_circles(50, 0.1, 2);
    const fs::path rt = temp_file("rt.csv");
    save_csv(circles, rt);
    const Dataset back = load_csv(rt);
    CHECK(back.inputs == circles.inputs);
    CHECK(back.labels == circles.labels);
}
