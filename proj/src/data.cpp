#include "ipsi/data.hpp"

#include "ipsi/rng.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <regex>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace ipsi {

namespace {

std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

std::vector<std::string> split_line(std::string_view line)
{
    std::vector<std::string> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        out.emplace_back(trim(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

CsvTable read_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    CsvTable table;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        if (!have_header) {
            if (line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF) line.erase(0, 3);   // BOM
            table.header = split_line(line);
            have_header = true;
            continue;
        }
        table.rows.push_back(split_line(line));
        if (table.rows.back().size() != table.header.size()) {
            throw ValidationError("row " + std::to_string(table.rows.size()) + ": expected " +
                                  std::to_string(table.header.size()) + " fields, found " +
                                  std::to_string(table.rows.back().size()));
        }
    }
    if (!have_header) throw SchemaError("missing header row in " + path.string());
    return table;
}

double parse_value(const std::string& text, std::size_t row, const std::string& column)
{
    double value = 0.0;
    const char* first = text.data();
    const char* last = first + text.size();
    if (!text.empty() && *first == '+') ++first;
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (text.empty() || ec != std::errc() || ptr != last || !std::isfinite(value)) {
        throw ValidationError("row " + std::to_string(row) + ", column " + column + ": non-finite or unparseable value '" +
                              text + "'");
    }
    return value;
}

int parse_treatment(const std::string& text, std::size_t row, const std::string& column)
{
    const double value = parse_value(text, row, column);
    if (value != 0.0 && value != 1.0) {
        throw ValidationError("row " + std::to_string(row) + ", column " + column + ": treatment must be 0 or 1, found '" +
                              text + "'");
    }
    return static_cast<int>(value);
}

std::string format_double(double v)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

void check_finite(const Matrix& m, const std::string& what)
{
    if (!m.allFinite()) throw ValidationError(what + " contains non-finite values");
}

void check_binary(const Eigen::Ref<const Matrix>& a, const std::string& what)
{
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = 0; j < a.cols(); ++j)
            if (a(i, j) != 0.0 && a(i, j) != 1.0)
                throw ValidationError(what + ": row " + std::to_string(i + 1) + " is not binary");
}

} // namespace

PointRecord PointData::record(Index i) const
{
    return PointRecord{x.row(i).transpose(), static_cast<int>(a(i)), y(i)};
}

std::vector<PointRecord> PointData::records() const
{
    std::vector<PointRecord> out;
    out.reserve(static_cast<std::size_t>(size()));
    for (Index i = 0; i < size(); ++i) out.push_back(record(i));
    return out;
}

PointData PointData::from_records(std::span<const PointRecord> records)
{
    PointData data;
    const Index n = static_cast<Index>(records.size());
    const Index d = n > 0 ? records.front().x.size() : 0;
    data.x.resize(n, d);
    data.a.resize(n);
    data.y.resize(n);
    for (Index i = 0; i < n; ++i) {
        const auto& r = records[static_cast<std::size_t>(i)];
        if (r.x.size() != d) throw ArgumentError("records have inconsistent covariate dimension");
        data.x.row(i) = r.x.transpose();
        data.a(i) = r.a;
        data.y(i) = r.y;
    }
    validate(data);
    return data;
}

Panel Panel::subset(std::span<const Index> rows) const
{
    Panel out;
    const Index m = static_cast<Index>(rows.size());
    out.ids.reserve(rows.size());
    out.x.resize(x.size());
    for (std::size_t t = 0; t < x.size(); ++t) out.x[t].resize(m, x[t].cols());
    out.a.resize(m, a.cols());
    out.y.resize(m);
    for (Index r = 0; r < m; ++r) {
        const Index i = rows[static_cast<std::size_t>(r)];
        out.ids.push_back(ids.empty() ? std::to_string(i + 1) : ids[static_cast<std::size_t>(i)]);
        for (std::size_t t = 0; t < x.size(); ++t) out.x[t].row(r) = x[t].row(i);
        out.a.row(r) = a.row(i);
        out.y(r) = y(i);
    }
    return out;
}

void validate(const PointData& data)
{
    const Index n = data.size();
    if (data.x.rows() != n || data.a.size() != n) throw ArgumentError("point data: inconsistent row counts");
    check_finite(data.x, "covariates");
    check_finite(data.y, "outcome");
    check_binary(data.a, "treatment");
}

void validate(const Panel& panel)
{
    const Index n = panel.size();
    if (panel.periods() < 1) throw ArgumentError("panel: at least one period required");
    if (panel.a.rows() != n || panel.a.cols() != panel.periods())
        throw ArgumentError("panel: treatment matrix must be n x T");
    if (!panel.ids.empty() && static_cast<Index>(panel.ids.size()) != n) throw ArgumentError("panel: id count mismatch");
    for (int t = 0; t < panel.periods(); ++t) {
        if (panel.x[static_cast<std::size_t>(t)].rows() != n) throw ArgumentError("panel: covariate row count mismatch");
        check_finite(panel.x[static_cast<std::size_t>(t)], "covariates at t=" + std::to_string(t + 1));
    }
    check_finite(panel.y, "outcome");
    check_binary(panel.a, "treatment");
}

PointData load_point_csv(const std::filesystem::path& path)
{
    const CsvTable table = read_csv(path);
    std::unordered_map<std::string, std::size_t> column;
    for (std::size_t j = 0; j < table.header.size(); ++j) column.emplace(table.header[j], j);

    std::vector<std::size_t> x_cols;
    for (int j = 1;; ++j) {
        const auto it = column.find("x" + std::to_string(j));
        if (it == column.end()) break;
        x_cols.push_back(it->second);
    }
    if (x_cols.empty()) throw SchemaError("missing column x1");
    for (const auto& name : table.header) {
        static const std::regex covariate(R"(x([0-9]+))");
        std::smatch m;
        if (std::regex_match(name, m, covariate) && std::stoul(m[1]) > x_cols.size())
            throw SchemaError("missing column x" + std::to_string(x_cols.size() + 1));
    }
    for (const char* required : {"a", "y"})
        if (!column.contains(required)) throw SchemaError(std::string("missing column ") + required);

    const std::size_t a_col = column.at("a");
    const std::size_t y_col = column.at("y");
    const Index n = static_cast<Index>(table.rows.size());
    PointData data;
    data.x.resize(n, static_cast<Index>(x_cols.size()));
    data.a.resize(n);
    data.y.resize(n);
    for (Index i = 0; i < n; ++i) {
        const auto& row = table.rows[static_cast<std::size_t>(i)];
        const std::size_t line = static_cast<std::size_t>(i) + 1;
        for (std::size_t j = 0; j < x_cols.size(); ++j)
            data.x(i, static_cast<Index>(j)) = parse_value(row[x_cols[j]], line, table.header[x_cols[j]]);
        data.a(i) = parse_treatment(row[a_col], line, "a");
        data.y(i) = parse_value(row[y_col], line, "y");
    }
    return data;
}

namespace {

struct PanelLayout {
    std::vector<std::vector<std::size_t>> x_cols;   // per period
    std::vector<std::size_t> a_cols;
    std::size_t y_col = 0;
};

PanelLayout parse_panel_header(const std::vector<std::string>& header, int periods)
{
    if (header.empty() || header.front() != "id") throw SchemaError("missing column id (must be first)");
    PanelLayout layout;
    std::size_t pos = 1;
    for (int t = 1; t <= periods; ++t) {
        std::vector<std::size_t> block;
        for (int j = 1;; ++j) {
            if (pos < header.size() && header[pos] == "x" + std::to_string(j) + "_" + std::to_string(t)) {
                block.push_back(pos++);
            } else {
                break;
            }
        }
        const std::string a_name = "a_" + std::to_string(t);
        if (pos >= header.size() || header[pos] != a_name) {
            throw SchemaError("column count inconsistent with T=" + std::to_string(periods) + ": expected " + a_name +
                              " at position " + std::to_string(pos + 1));
        }
        if (t == 1 && block.empty()) throw SchemaError("missing column x1_1");
        layout.x_cols.push_back(std::move(block));
        layout.a_cols.push_back(pos++);
    }
    if (pos + 1 != header.size() || header[pos] != "y") {
        throw SchemaError("column count inconsistent with T=" + std::to_string(periods) +
                          ": expected final column y after a_" + std::to_string(periods));
    }
    layout.y_col = pos;
    return layout;
}

} // namespace

Panel load_panel_csv(const std::filesystem::path& path, int periods)
{
    if (periods < 1) throw ArgumentError("T must be positive");
    const CsvTable table = read_csv(path);
    const PanelLayout layout = parse_panel_header(table.header, periods);
    const Index n = static_cast<Index>(table.rows.size());

    Panel panel;
    panel.x.resize(static_cast<std::size_t>(periods));
    for (int t = 0; t < periods; ++t)
        panel.x[static_cast<std::size_t>(t)].resize(n, static_cast<Index>(layout.x_cols[static_cast<std::size_t>(t)].size()));
    panel.a.resize(n, periods);
    panel.y.resize(n);
    panel.ids.reserve(static_cast<std::size_t>(n));
    std::unordered_set<std::string> seen;
    for (Index i = 0; i < n; ++i) {
        const auto& row = table.rows[static_cast<std::size_t>(i)];
        const std::size_t line = static_cast<std::size_t>(i) + 1;
        if (!seen.insert(row[0]).second) throw ValidationError("duplicate id '" + row[0] + "' at row " + std::to_string(line));
        panel.ids.push_back(row[0]);
        for (int t = 0; t < periods; ++t) {
            const auto& block = layout.x_cols[static_cast<std::size_t>(t)];
            for (std::size_t j = 0; j < block.size(); ++j)
                panel.x[static_cast<std::size_t>(t)](i, static_cast<Index>(j)) =
                    parse_value(row[block[j]], line, table.header[block[j]]);
            const std::size_t ac = layout.a_cols[static_cast<std::size_t>(t)];
            panel.a(i, t) = parse_treatment(row[ac], line, table.header[ac]);
        }
        panel.y(i) = parse_value(row[layout.y_col], line, "y");
    }
    return panel;
}

int infer_periods(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw SchemaError("missing header row in " + path.string());
    const auto header = split_line(line);
    if (header.empty() || (header.front() != "id" && header.front() != "\xEF\xBB\xBFid")) return 0;
    int periods = 0;
    static const std::regex treatment(R"(a_([0-9]+))");
    for (const auto& name : header) {
        std::smatch m;
        if (std::regex_match(name, m, treatment)) periods = std::max(periods, std::stoi(m[1]));
    }
    if (periods == 0) throw SchemaError("panel header has no a_t columns");
    return periods;
}

void write_point_csv(const std::filesystem::path& path, const PointData& data)
{
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    for (Index j = 0; j < data.dim(); ++j) out << 'x' << j + 1 << ',';
    out << "a,y\n";
    for (Index i = 0; i < data.size(); ++i) {
        for (Index j = 0; j < data.dim(); ++j) out << format_double(data.x(i, j)) << ',';
        out << static_cast<int>(data.a(i)) << ',' << format_double(data.y(i)) << '\n';
    }
    if (!out) throw Error("write failed for " + path.string());
}

void write_panel_csv(const std::filesystem::path& path, const Panel& panel)
{
    std::ofstream out(path);
    if (!out) throw Error("cannot write " + path.string());
    out << "id";
    for (int t = 1; t <= panel.periods(); ++t) {
        for (Index j = 0; j < panel.dim(t - 1); ++j) out << ",x" << j + 1 << '_' << t;
        out << ",a_" << t;
    }
    out << ",y\n";
    for (Index i = 0; i < panel.size(); ++i) {
        out << (panel.ids.empty() ? std::to_string(i + 1) : panel.ids[static_cast<std::size_t>(i)]);
        for (int t = 0; t < panel.periods(); ++t) {
            for (Index j = 0; j < panel.dim(t); ++j) out << ',' << format_double(panel.x[static_cast<std::size_t>(t)](i, j));
            out << ',' << static_cast<int>(panel.a(i, t));
        }
        out << ',' << format_double(panel.y(i)) << '\n';
    }
    if (!out) throw Error("write failed for " + path.string());
}

PointData to_point_data(const Panel& panel)
{
    if (panel.periods() != 1) throw ArgumentError("only a panel with T=1 converts to point data");
    PointData data;
    data.x = panel.x.front();
    data.a = panel.a.col(0);
    data.y = panel.y;
    return data;
}

Panel to_panel(const PointData& data)
{
    Panel panel;
    panel.x = {data.x};
    panel.a = data.a;
    panel.y = data.y;
    panel.ids.reserve(static_cast<std::size_t>(data.size()));
    for (Index i = 0; i < data.size(); ++i) panel.ids.push_back(std::to_string(i + 1));
    return panel;
}

Vector Trajectory::history(int t) const
{
    if (t < 1 || static_cast<std::size_t>(t) > x.size() || static_cast<std::size_t>(t - 1) > a.size())
        throw ArgumentError("trajectory too short for H_" + std::to_string(t));
    Index width = t - 1;
    for (int s = 0; s < t; ++s) width += x[static_cast<std::size_t>(s)].size();
    Vector h(width);
    Index pos = 0;
    for (int s = 0; s < t; ++s) {
        const auto& xs = x[static_cast<std::size_t>(s)];
        h.segment(pos, xs.size()) = xs;
        pos += xs.size();
    }
    for (int s = 0; s < t - 1; ++s) h(pos++) = a[static_cast<std::size_t>(s)];
    return h;
}

Trajectory Trajectory::from_history(CRef<Vector> features, int t, std::span<const Index> dims)
{
    Trajectory traj;
    Index pos = 0;
    for (int s = 0; s < t; ++s) {
        const Index d = dims[static_cast<std::size_t>(s)];
        traj.x.emplace_back(features.segment(pos, d));
        pos += d;
    }
    for (int s = 0; s < t - 1; ++s) traj.a.push_back(static_cast<int>(features(pos++)));
    if (pos != features.size()) throw ArgumentError("history length does not match the period dimensions");
    return traj;
}

Trajectory trajectory_of(const Panel& panel, Index subject)
{
    Trajectory traj;
    for (int t = 0; t < panel.periods(); ++t) {
        traj.x.emplace_back(panel.x[static_cast<std::size_t>(t)].row(subject).transpose());
        traj.a.push_back(static_cast<int>(panel.a(subject, t)));
    }
    return traj;
}

Index history_width(const Panel& panel, int t)
{
    if (t < 1 || t > panel.periods()) throw ArgumentError("t=" + std::to_string(t) + " out of range 1.." + std::to_string(panel.periods()));
    Index width = t - 1;
    for (int s = 0; s < t; ++s) width += panel.dim(s);
    return width;
}

History history_at(const Panel& panel, Index subject, int t)
{
    const Index width = history_width(panel, t);
    if (subject < 0 || subject >= panel.size()) throw ArgumentError("subject index out of range");
    History h{t, Vector(width)};
    Index pos = 0;
    for (int s = 0; s < t; ++s) {
        const Index d = panel.dim(s);
        h.features.segment(pos, d) = panel.x[static_cast<std::size_t>(s)].row(subject).transpose();
        pos += d;
    }
    for (int s = 0; s < t - 1; ++s) h.features(pos++) = panel.a(subject, s);
    return h;
}

Matrix history_matrix(const Panel& panel, int t)
{
    const Index width = history_width(panel, t);
    Matrix h(panel.size(), width);
    Index pos = 0;
    for (int s = 0; s < t; ++s) {
        const Index d = panel.dim(s);
        h.middleCols(pos, d) = panel.x[static_cast<std::size_t>(s)];
        pos += d;
    }
    if (t > 1) h.middleCols(pos, t - 1) = panel.a.leftCols(t - 1);
    return h;
}

std::vector<Index> FoldAssignment::members(int fold) const
{
    std::vector<Index> out;
    for (Index i = 0; i < size(); ++i)
        if (fold_of[static_cast<std::size_t>(i)] == fold) out.push_back(i);
    return out;
}

std::vector<Index> FoldAssignment::complement(int fold) const
{
    std::vector<Index> out;
    for (Index i = 0; i < size(); ++i)
        if (fold_of[static_cast<std::size_t>(i)] != fold) out.push_back(i);
    return out;
}

FoldAssignment assign_folds(Index n_subjects, int k, std::uint64_t seed)
{
    if (k < 2) throw ArgumentError("number of folds must be at least 2");
    if (n_subjects < k) throw ArgumentError("number of folds exceeds number of subjects");

    std::vector<Index> order(static_cast<std::size_t>(n_subjects));
    std::iota(order.begin(), order.end(), Index{0});
    CounterRng rng(seed, 0, stream_tag::folds);
    for (Index i = n_subjects - 1; i > 0; --i) {
        const auto j = static_cast<Index>(rng.below(static_cast<std::uint64_t>(i + 1)));
        std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
    }
    FoldAssignment folds{k, seed, std::vector<int>(static_cast<std::size_t>(n_subjects))};
    for (Index pos = 0; pos < n_subjects; ++pos)
        folds.fold_of[static_cast<std::size_t>(order[static_cast<std::size_t>(pos)])] = static_cast<int>(pos % k);
    return folds;
}

} // namespace ipsi
