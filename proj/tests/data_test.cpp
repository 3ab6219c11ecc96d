#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "driftbench/data.hpp"
#include "support.hpp"

using namespace driftbench;
using namespace driftbench::data;
namespace fs = std::filesystem;

namespace {

Dataset tiny_dataset(std::size_t per_class, std::size_t classes = 2) {
    Dataset ds;
    ds.name = "tiny";
    for (std::size_t c = 0; c < classes; ++c) ds.class_names.push_back("c" + std::to_string(c));
    SampleId id = 0;
    for (std::size_t c = 0; c < classes; ++c) {
        for (std::size_t i = 0; i < per_class; ++i) {
            nn::Vector f(2);
            f << static_cast<double>(id) * 0.1, -static_cast<double>(c);
            ds.samples.push_back({id++, f, c, 0});
        }
    }
    return ds;
}

fs::path write_file(const std::string& name, const std::string& body) {
    const fs::path p = fs::temp_directory_path() / name;
    std::ofstream(p) << body;
    return p;
}

}  // namespace

TEST_CASE("stratified split keeps class proportions") {
    const Dataset ds = tiny_dataset(50);
    const Split s = stratified_split(ds, 0.75, 7);
    CHECK(s.train.size() == 74);  // floor(37.5) per class
    CHECK(s.test.size() == 26);
    std::set<SampleId> all(s.train.begin(), s.train.end());
    for (const auto id : s.test) CHECK(all.insert(id).second);
    CHECK(all.size() == 100);
}

TEST_CASE("split of 100 samples per class at 0.75") {
    const Split s = stratified_split(tiny_dataset(100, 1), 0.75, 1);
    CHECK(s.train.size() == 75);
    CHECK(s.test.size() == 25);
}

TEST_CASE("split is a pure function of the seed") {
    const Dataset ds = tiny_dataset(40, 3);
    const Split a = stratified_split(ds, 0.6, 5);
    const Split b = stratified_split(ds, 0.6, 5);
    const Split c = stratified_split(ds, 0.6, 6);
    CHECK(a.train == b.train);
    CHECK(a.test == b.test);
    CHECK(a.train != c.train);
}

TEST_CASE("split rejects fractions outside (0, 1) and singleton classes") {
    const Dataset ds = tiny_dataset(10);
    CHECK_THROWS_AS(stratified_split(ds, 1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(stratified_split(ds, 0.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(stratified_split(tiny_dataset(1), 0.5, 1), std::invalid_argument);
}

TEST_CASE("synthetic domains: class means follow the affine distortion") {
    Rng rng(3);
    std::vector<nn::Vector> protos = {nn::Vector::Zero(3), nn::Vector::Constant(3, 4.0)};
    DomainSpec spec;
    spec.domain = 2;
    spec.transform = nn::Matrix::Identity(3, 3) * 2.0;
    spec.offset = nn::Vector::Constant(3, 1.0);
    spec.noise = 0.5;
    spec.class_counts = {4000, 4000};
    const Dataset ds = generate_synthetic_domain(protos, {"a", "b"}, spec, rng);
    nn::Vector mean_b = nn::Vector::Zero(3);
    for (const auto& s : ds.samples)
        if (s.label == 1) mean_b += s.features;
    mean_b /= 4000.0;
    for (int k = 0; k < 3; ++k) CHECK(mean_b(k) == doctest::Approx(9.0).epsilon(0.005));
    CHECK(ds.samples.front().id == 2 * kDomainIdStride);
    CHECK_NOTHROW(ds.validate());
}

TEST_CASE("synthetic domains reject degenerate settings") {
    Rng rng(1);
    std::vector<nn::Vector> protos = {nn::Vector::Zero(2)};
    DomainSpec spec;
    spec.transform = nn::Matrix::Zero(2, 2);
    spec.offset = nn::Vector::Zero(2);
    spec.class_counts = {3};
    CHECK_THROWS_AS(generate_synthetic_domain(protos, {"a"}, spec, rng), std::invalid_argument);
    spec.transform = nn::Matrix::Identity(2, 2);
    spec.noise = 0.0;
    CHECK_THROWS_AS(generate_synthetic_domain(protos, {"a"}, spec, rng), std::invalid_argument);
}

TEST_CASE("make_synthetic_datasets shares names and differs across domains") {
    SyntheticConfig cfg;
    cfg.samples_per_class = 20;
    const auto a = make_synthetic_datasets(cfg, 11);
    const auto b = make_synthetic_datasets(cfg, 11);
    REQUIRE(a.size() == 3);
    CHECK(a[0].class_names == a[2].class_names);
    CHECK(a[0].samples == b[0].samples);
    CHECK(a[0].samples[0].features != a[1].samples[0].features);
    CHECK(a[1].class_counts() == std::vector<std::size_t>(5, 20));
    const auto round = synthetic_config_from_json(to_json(cfg));
    CHECK(round.noise == cfg.noise);
    CHECK(round.shift == cfg.shift);
}

TEST_CASE("CSV round trip is exact") {
    SyntheticConfig cfg;
    cfg.samples_per_class = 5;
    cfg.classes = 3;
    const Dataset ds = make_synthetic_datasets(cfg, 2)[1];
    const fs::path p = fs::temp_directory_path() / "driftbench_roundtrip.csv";
    write_csv_dataset(p, ds);
    const Dataset back = load_csv_dataset(p, {std::nullopt, ds.class_names, ds.name});
    fs::remove(p);
    CHECK(back.samples == ds.samples);
    CHECK(back.domain == 1);
    CHECK(dataset_manifest(back).at("content_hash") == dataset_manifest(ds).at("content_hash"));
}

TEST_CASE("CSV loader reports every malformed line") {
    const auto p = write_file("driftbench_bad.csv",
                              "id,label,domain,f0,f1\n"
                              "1,0,0,0.5,1.5\n"
                              "2,1,0,0.5\n"
                              "3,1,0,abc,1\n"
                              "1,1,0,2,2\n");
    try {
        load_csv_dataset(p);
        FAIL("expected CsvError");
    } catch (const CsvError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("3 problem(s)") != std::string::npos);
        CHECK(msg.find("line 3") != std::string::npos);
        CHECK(msg.find("line 4") != std::string::npos);
        CHECK(msg.find("first seen on line 2") != std::string::npos);
    }
    fs::remove(p);
}

TEST_CASE("CSV loader checks header, schema and domains") {
    const auto bad_header = write_file("driftbench_hdr.csv", "label,id,domain,f0\n0,1,0,1\n");
    CHECK_THROWS_AS(load_csv_dataset(bad_header), CsvError);
    const auto ok = write_file("driftbench_ok.csv", "id,label,domain,f0\n1,0,4,1\n2,1,4,2\n");
    CHECK_THROWS_AS(load_csv_dataset(ok, {3, {}, ""}), CsvError);
    const Dataset ds = load_csv_dataset(ok);
    CHECK(ds.class_names == std::vector<std::string>{"class_0", "class_1"});
    CHECK(ds.domain == 4);
    const auto mixed = write_file("driftbench_mixed.csv", "id,label,domain,f0\n1,0,0,1\n2,1,1,2\n");
    CHECK_THROWS_AS(load_csv_dataset(mixed), CsvError);
    CHECK_THROWS_AS(load_csv_dataset(fs::temp_directory_path() / "driftbench_missing.csv"), CsvError);
    for (const auto& p : {bad_header, ok, mixed}) fs::remove(p);
}

TEST_CASE("sample store") {
    SampleStore store;
    for (auto s : tiny_dataset(3).samples) store.add(s);
    CHECK(store.size() == 6);
    CHECK(store.at(4).label == 1);
    CHECK(store.contains(5));
    CHECK_FALSE(store.contains(6));
    CHECK_THROWS_AS(store.at(99), std::out_of_range);
    CHECK_THROWS_AS(store.add(store.at(0)), std::invalid_argument);
    const nn::Matrix x = stack_features({&store.at(1), &store.at(4)});
    CHECK(x.cols() == 2);
    CHECK(x.col(1) == store.at(4).features);
}
