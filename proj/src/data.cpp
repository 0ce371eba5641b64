#include "blv/data.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <tuple>

#include "blv/distributions.hpp"
#include "blv/error.hpp"

namespace blv {

AgeGroup::AgeGroup(int lower_bound) : lower_(lower_bound) {
    const bool ok = lower_bound == 0 || lower_bound == 1 ||
                    (lower_bound >= 5 && lower_bound <= 105 && lower_bound % 5 == 0);
    if (!ok) throw DomainError(fmt::format("invalid age group lower bound {}", lower_bound));
}

std::vector<AgeGroup> AgeGroup::standard() {
    std::vector<AgeGroup> out{AgeGroup(0), AgeGroup(1)};
    for (int x = 5; x <= 105; x += 5) out.emplace_back(x);
    return out;
}

MortalityPanel MortalityPanel::from_entries(std::span<const Entry> entries) {
    if (entries.empty()) throw StructuralError("panel has no entries");

    std::set<int> age_set;
    std::map<std::string, std::map<int, std::map<int, double>>> by_country;
    for (const auto& e : entries) {
        AgeGroup age(e.age);
        if (!(e.q > 0.0 && e.q < 1.0)) {
            throw DomainError(fmt::format("q outside (0,1) for country {}, time {}, age {}: {}",
                                          e.country, e.time, e.age, e.q));
        }
        age_set.insert(age.lower_bound());
        auto [it, inserted] = by_country[e.country][e.time].emplace(e.age, e.q);
        if (!inserted) {
            throw StructuralError(fmt::format("duplicate entry for country {}, time {}, age {}",
                                              e.country, e.time, e.age));
        }
    }

    MortalityPanel panel;
    for (int x : age_set) panel.ages_.emplace_back(x);
    const auto J = static_cast<int>(panel.ages_.size());

    int rows = 0;
    for (const auto& [id, times] : by_country) {
        const int first = times.begin()->first;
        const int last = times.rbegin()->first;
        if (last - first + 1 != static_cast<int>(times.size())) {
            throw ContiguityError(fmt::format("country {} has a gap in its time index", id));
        }
        if (times.size() < 2) {
            throw ContiguityError(
                fmt::format("country {} has {} period(s); at least 2 are required", id,
                            times.size()));
        }
        for (const auto& [t, row] : times) {
            if (static_cast<int>(row.size()) != J) {
                throw StructuralError(fmt::format(
                    "country {}, time {} has {} age groups, expected {}", id, t, row.size(), J));
            }
        }
        panel.series_.push_back({id, first, last, rows});
        rows += static_cast<int>(times.size());
    }

    panel.q_.resize(rows, J);
    int r = 0;
    for (const auto& [id, times] : by_country) {
        for (const auto& [t, row] : times) {
            int j = 0;
            for (const auto& [age, q] : row) panel.q_(r, j++) = q;
            ++r;
        }
    }
    return panel;
}

int MortalityPanel::row_index(int country, int time) const {
    const auto& s = series_.at(country);
    if (time < s.first_time || time > s.last_time) {
        throw StructuralError(fmt::format("time {} outside series of country {}", time, s.id));
    }
    return s.row_offset + (time - s.first_time);
}

double MortalityPanel::value(int country, int time, int age_index) const {
    return q_(row_index(country, time), age_index);
}

std::vector<int> MortalityPanel::row_country() const {
    std::vector<int> out(row_count());
    for (int i = 0; i < country_count(); ++i) {
        const auto& s = series_[i];
        std::fill_n(out.begin() + s.row_offset, s.length(), i);
    }
    return out;
}

bool MortalityPanel::operator==(const MortalityPanel& other) const {
    if (ages_ != other.ages_ || series_.size() != other.series_.size()) return false;
    for (std::size_t i = 0; i < series_.size(); ++i) {
        const auto& a = series_[i];
        const auto& b = other.series_[i];
        if (std::tie(a.id, a.first_time, a.last_time, a.row_offset) !=
            std::tie(b.id, b.first_time, b.last_time, b.row_offset)) {
            return false;
        }
    }
    return q_ == other.q_;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const auto pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

template <typename T>
T parse_number(std::string_view field, std::size_t line, const char* what) {
    T value{};
    const auto* end = field.data() + field.size();
    const auto [ptr, ec] = std::from_chars(field.data(), end, value);
    if (ec != std::errc() || ptr != end || field.empty()) {
        throw ParseError(line, fmt::format("cannot parse {} from '{}'", what, field));
    }
    return value;
}

}  // namespace

MortalityPanel parse_panel(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    std::vector<MortalityPanel::Entry> entries;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header_seen) {
            if (line != "country,time,age,qx") {
                throw ParseError(line_no, "expected header 'country,time,age,qx'");
            }
            header_seen = true;
            continue;
        }
        const auto fields = split_fields(line);
        if (fields.size() != 4) {
            throw ParseError(line_no, fmt::format("expected 4 fields, found {}", fields.size()));
        }
        if (fields[0].empty()) throw ParseError(line_no, "empty country identifier");
        const int age = parse_number<int>(fields[2], line_no, "age");
        try {
            AgeGroup check(age);
        } catch (const DomainError& e) {
            throw ParseError(line_no, e.what());
        }
        entries.push_back({std::string(fields[0]), parse_number<int>(fields[1], line_no, "time"),
                           age, parse_number<double>(fields[3], line_no, "qx")});
    }
    if (!header_seen) throw ParseError(line_no, "empty file");
    return MortalityPanel::from_entries(entries);
}

MortalityPanel load_panel(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open panel file " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_panel(buf.str());
}

std::string format_panel(const MortalityPanel& panel) {
    std::string out = "country,time,age,qx\n";
    for (int i = 0; i < panel.country_count(); ++i) {
        const auto& s = panel.series(i);
        for (int t = s.first_time; t <= s.last_time; ++t) {
            const int r = panel.row_index(i, t);
            for (int j = 0; j < panel.age_count(); ++j) {
                out += fmt::format("{},{},{},{}\n", s.id, t, panel.ages()[j].lower_bound(),
                                   panel.values()(r, j));
            }
        }
    }
    return out;
}

void write_panel(const MortalityPanel& panel, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write panel file " + path.string());
    out << format_panel(panel);
}

std::map<std::string, std::string> load_display_names(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open names file " + path.string());
    const auto j = nlohmann::json::parse(in);
    return j.get<std::map<std::string, std::string>>();
}

double kendall_tau(std::span<const double> series) {
    const auto T = series.size();
    if (T < 2) throw InsufficientDataError("kendall_tau needs at least 2 values");
    long s = 0;
    for (std::size_t t = 0; t + 1 < T; ++t) {
        for (std::size_t u = t + 1; u < T; ++u) {
            const double d = series[u] - series[t];
            s += (d > 0.0) - (d < 0.0);
        }
    }
    return 2.0 * static_cast<double>(s) / (static_cast<double>(T) * static_cast<double>(T - 1));
}

TrendTable trend_table(const MortalityPanel& panel) {
    TrendTable out;
    out.ages = panel.ages();
    out.tau.resize(panel.country_count(), panel.age_count());
    std::vector<double> buf;
    for (int i = 0; i < panel.country_count(); ++i) {
        const auto& s = panel.series(i);
        out.countries.push_back(s.id);
        for (int j = 0; j < panel.age_count(); ++j) {
            buf.assign(s.length(), 0.0);
            for (int k = 0; k < s.length(); ++k) buf[k] = panel.values()(s.row_offset + k, j);
            out.tau(i, j) = kendall_tau(buf);
        }
    }
    return out;
}

Eigen::MatrixXd logit_transform(const MortalityPanel& panel, bool centred) {
    Eigen::MatrixXd y = panel.values().unaryExpr([](double q) { return logit(q); });
    if (centred) y.rowwise() -= y.colwise().mean();
    return y;
}

Eigen::MatrixXd correlation_matrix(const MortalityPanel& panel, Scale scale) {
    Eigen::MatrixXd x = scale == Scale::logit ? logit_transform(panel, false) : panel.values();
    x.rowwise() -= x.colwise().mean();
    const Eigen::VectorXd norms = x.colwise().norm();
    for (int j = 0; j < x.cols(); ++j) {
        if (!(norms(j) > 0.0)) {
            throw UndefinedStatisticError(fmt::format(
                "age group {} is constant; correlation undefined", panel.ages()[j].lower_bound()));
        }
        x.col(j) /= norms(j);
    }
    Eigen::MatrixXd r = x.transpose() * x;
    for (int j = 0; j < r.rows(); ++j) {
        r(j, j) = 1.0;
        for (int k = 0; k < j; ++k) {
            const double v = std::clamp(0.5 * (r(j, k) + r(k, j)), -1.0, 1.0);
            r(j, k) = r(k, j) = v;
        }
    }
    return r;
}

}  // namespace blv
