#include "ipsi/data.hpp"
#include "ipsi/simulate.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>

namespace fs = std::filesystem;
using namespace ipsi;

namespace {

fs::path scratch(const std::string& name)
{
    const fs::path dir = fs::temp_directory_path() / "ipsi_test_data";
    fs::create_directories(dir);
    return dir / name;
}

fs::path write_text(const std::string& name, const std::string& body)
{
    const fs::path p = scratch(name);
    std::ofstream(p) << body;
    return p;
}

std::string message_of(const std::function<void()>& f)
{
    try {
        f();
    } catch (const std::exception& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST_CASE("point CSV round-trips exactly")
{
    const PointData data = generate_points(preset("single-logistic"), 300, 11);
    const fs::path p = scratch("points.csv");
    write_point_csv(p, data);
    const PointData back = load_point_csv(p);
    CHECK(back.x == data.x);
    CHECK(back.a == data.a);
    CHECK(back.y == data.y);
    CHECK(infer_periods(p) == 0);
}

TEST_CASE("panel CSV round-trips exactly and T is inferred from the header")
{
    const Panel panel = generate_panel(preset("discrete-T3"), 250, 5);
    const fs::path p = scratch("panel.csv");
    write_panel_csv(p, panel);
    CHECK(infer_periods(p) == 3);
    const Panel back = load_panel_csv(p, 3);
    CHECK(back.ids == panel.ids);
    for (int t = 0; t < 3; ++t) CHECK(back.x[static_cast<std::size_t>(t)] == panel.x[static_cast<std::size_t>(t)]);
    CHECK(back.a == panel.a);
    CHECK(back.y == panel.y);
}

TEST_CASE("point loader reports schema problems")
{
    const auto no_a = write_text("no_a.csv", "x1,y\n0.1,2\n");
    CHECK(message_of([&] { load_point_csv(no_a); }) == "missing column a");
    CHECK_THROWS_AS(load_point_csv(no_a), SchemaError);

    const auto gap = write_text("gap.csv", "x1,x3,a,y\n0.1,0.2,1,2\n");
    CHECK(message_of([&] { load_point_csv(gap); }) == "missing column x2");

    const auto bad_a = write_text("bad_a.csv", "x1,a,y\n0.1,1,2\n0.3,2,1\n");
    const std::string msg = message_of([&] { load_point_csv(bad_a); });
    CHECK(msg.find("row 2") != std::string::npos);
    CHECK(msg.find("column a") != std::string::npos);
    CHECK_THROWS_AS(load_point_csv(bad_a), ValidationError);

    const auto nan = write_text("nan.csv", "x1,a,y\nnan,1,2\n");
    CHECK_THROWS_AS(load_point_csv(nan), ValidationError);

    const auto extra = write_text("extra.csv", "x1,note,a,y\n0.5,hello,1,2\n");
    const PointData ok = load_point_csv(extra);
    CHECK(ok.size() == 1);
    CHECK(ok.x(0, 0) == 0.5);
}

TEST_CASE("panel loader enforces layout and unique ids")
{
    const auto dup = write_text("dup.csv", "id,x1_1,a_1,x1_2,a_2,y\ns1,0,1,1,0,2\ns1,1,0,0,1,3\n");
    CHECK(message_of([&] { load_panel_csv(dup, 2); }).find("duplicate id 's1'") != std::string::npos);

    const auto good = write_text("good.csv", "id,x1_1,a_1,x1_2,a_2,y\ns1,0,1,1,0,2\ns2,1,0,0,1,3\n");
    CHECK(message_of([&] { load_panel_csv(good, 3); }).find("column count inconsistent with T=3") != std::string::npos);
    CHECK_THROWS_AS(load_panel_csv(good, 3), SchemaError);
    const Panel p = load_panel_csv(good, 2);
    CHECK(p.size() == 2);
    CHECK(p.a(1, 1) == 1.0);
}

TEST_CASE("histories flatten covariates then treatments")
{
    const Panel panel = generate_panel(preset("discrete-T2"), 20, 3);
    const Matrix h2 = history_matrix(panel, 2);
    REQUIRE(h2.cols() == 3);
    for (Index i = 0; i < panel.size(); ++i) {
        CHECK(h2(i, 0) == panel.x[0](i, 0));
        CHECK(h2(i, 1) == panel.x[1](i, 0));
        CHECK(h2(i, 2) == panel.a(i, 0));
        CHECK(history_at(panel, i, 2).features == h2.row(i).transpose());
        const Trajectory traj = trajectory_of(panel, i);
        CHECK(traj.history(2) == h2.row(i).transpose());
        const std::vector<Index> dims{1, 1};
        const Trajectory rebuilt = Trajectory::from_history(h2.row(i).transpose(), 2, dims);
        CHECK(rebuilt.history(2) == traj.history(2));
    }
    CHECK_THROWS_AS(history_width(panel, 3), ArgumentError);
}

TEST_CASE("fold assignment partitions subjects")
{
    const FoldAssignment folds = assign_folds(103, 5, 9);
    std::vector<int> sizes(5, 0);
    for (int f : folds.fold_of) {
        REQUIRE(f >= 0);
        REQUIRE(f < 5);
        ++sizes[static_cast<std::size_t>(f)];
    }
    CHECK(*std::max_element(sizes.begin(), sizes.end()) - *std::min_element(sizes.begin(), sizes.end()) <= 1);
    for (int k = 0; k < 5; ++k) {
        const auto in = folds.members(k), out = folds.complement(k);
        CHECK(in.size() + out.size() == 103);
        std::set<Index> all(in.begin(), in.end());
        all.insert(out.begin(), out.end());
        CHECK(all.size() == 103);
    }
    CHECK(assign_folds(103, 5, 9).fold_of == folds.fold_of);
    CHECK(assign_folds(103, 5, 10).fold_of != folds.fold_of);
    CHECK_THROWS_AS(assign_folds(3, 5, 1), ArgumentError);
    CHECK_THROWS_AS(assign_folds(30, 1, 1), ArgumentError);
}

TEST_CASE("subset and conversions keep rows aligned")
{
    const Panel panel = generate_panel(preset("discrete-T2"), 30, 1);
    const std::vector<Index> rows{4, 0, 17};
    const Panel sub = panel.subset(rows);
    REQUIRE(sub.size() == 3);
    CHECK(sub.ids[0] == panel.ids[4]);
    CHECK(sub.y(2) == panel.y(17));
    CHECK(sub.a.row(1) == panel.a.row(0));

    const PointData pts = generate_points(preset("null"), 10, 2);
    const PointData back = to_point_data(to_panel(pts));
    CHECK(back.x == pts.x);
    CHECK(back.y == pts.y);
    CHECK_THROWS_AS(to_point_data(panel), ArgumentError);
}
