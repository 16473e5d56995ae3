#pragma once

#include "ipsi/types.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace ipsi {

// One observation Z = (X, A, Y) at a single time point.
struct PointRecord {
    Vector x;
    int a = 0;
    double y = 0.0;
};

// Column-major view of a single-time-point sample. Row i is subject i.
struct PointData {
    Matrix x;      // n x d
    Vector a;      // n, entries in {0, 1}
    Vector y;      // n

    Index size() const { return y.size(); }
    Index dim() const { return x.cols(); }
    PointRecord record(Index i) const;
    std::vector<PointRecord> records() const;

    static PointData from_records(std::span<const PointRecord> records);
};

// Wide longitudinal sample Z = (X_1, A_1, ..., X_T, A_T, Y), one row per subject.
struct Panel {
    std::vector<std::string> ids;
    std::vector<Matrix> x;   // x[t] is n x d_t, t = 0..T-1
    Matrix a;                // n x T, entries in {0, 1}
    Vector y;                // n

    Index size() const { return y.size(); }
    int periods() const { return static_cast<int>(x.size()); }
    Index dim(int t) const { return x[static_cast<std::size_t>(t)].cols(); }

    // Rows selected in the given order; ids are carried along.
    Panel subset(std::span<const Index> rows) const;
};

// H_t = (x_1, ..., x_t, a_1, ..., a_{t-1}) flattened; covariates in time order,
// then treatments in time order. t is 1-based.
struct History {
    int t = 1;
    Vector features;
};

// Validates shape, binary treatments and finiteness.
void validate(const PointData& data);
void validate(const Panel& panel);

PointData load_point_csv(const std::filesystem::path& path);
Panel load_panel_csv(const std::filesystem::path& path, int periods);

// Number of periods implied by a wide header (count of `a_t` columns); 0 when
// the header is a single-time-point layout.
int infer_periods(const std::filesystem::path& path);

// Doubles written in shortest round-trip form, so a write/read cycle is exact.
void write_point_csv(const std::filesystem::path& path, const PointData& data);
void write_panel_csv(const std::filesystem::path& path, const Panel& panel);

PointData to_point_data(const Panel& panel);
Panel to_panel(const PointData& data);

// Structured prefix of one subject's trajectory: x[0..] and a[0..] (0-based
// storage of 1-based periods). history(t) flattens it into H_t.
struct Trajectory {
    std::vector<Vector> x;
    std::vector<int> a;

    Vector history(int t) const;
    static Trajectory from_history(CRef<Vector> features, int t, std::span<const Index> dims);
};

Trajectory trajectory_of(const Panel& panel, Index subject);

Index history_width(const Panel& panel, int t);
History history_at(const Panel& panel, Index subject, int t);
// All subjects' H_t stacked as rows (n x history_width(t)).
Matrix history_matrix(const Panel& panel, int t);

// Cross-fitting partition. Folds are 0-based internally: fold_of[i] in [0, K).
struct FoldAssignment {
    int k = 0;
    std::uint64_t seed = 0;
    std::vector<int> fold_of;

    Index size() const { return static_cast<Index>(fold_of.size()); }
    std::vector<Index> members(int fold) const;
    std::vector<Index> complement(int fold) const;
};

FoldAssignment assign_folds(Index n_subjects, int k, std::uint64_t seed);

} // namespace ipsi
