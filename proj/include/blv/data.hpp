#pragma once

#include <Eigen/Dense>
#include <compare>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace blv {

/// Age interval labelled by its lower bound: [0,1), [1,5), [5,10), ..., [105,110).
class AgeGroup {
public:
    /// Throws DomainError unless the bound is 0, 1 or a multiple of 5 up to 105.
    explicit AgeGroup(int lower_bound);

    [[nodiscard]] int lower_bound() const noexcept { return lower_; }
    auto operator<=>(const AgeGroup&) const = default;

    /// The 23 standard groups in increasing order.
    static std::vector<AgeGroup> standard();

private:
    int lower_;
};

/// Contiguous run of periods [first_time, last_time] for one country.
struct CountrySeries {
    std::string id;
    int first_time;
    int last_time;
    /// Index of the first row of this country in the stacked data matrix.
    int row_offset;

    [[nodiscard]] int length() const noexcept { return last_time - first_time + 1; }
};

/// Ragged country x period panel of probabilities in (0,1). Rows are stacked
/// country-major, periods increasing within each country; one column per age group.
class MortalityPanel {
public:
    struct Entry {
        std::string country;
        int time;
        int age;
        double q;
    };

    /// Validates and assembles a panel from unordered entries. Countries are
    /// sorted by identifier, so entry order does not matter.
    static MortalityPanel from_entries(std::span<const Entry> entries);

    [[nodiscard]] int country_count() const noexcept { return static_cast<int>(series_.size()); }
    [[nodiscard]] int age_count() const noexcept { return static_cast<int>(ages_.size()); }
    [[nodiscard]] int row_count() const noexcept { return static_cast<int>(q_.rows()); }
    [[nodiscard]] const std::vector<AgeGroup>& ages() const noexcept { return ages_; }
    [[nodiscard]] const std::vector<CountrySeries>& series() const noexcept { return series_; }
    [[nodiscard]] const CountrySeries& series(int i) const { return series_.at(i); }

    /// Stacked (row_count x age_count) matrix.
    [[nodiscard]] const Eigen::MatrixXd& values() const noexcept { return q_; }
    [[nodiscard]] double value(int country, int time, int age_index) const;
    [[nodiscard]] int row_index(int country, int time) const;

    /// Country index of each stacked row.
    [[nodiscard]] std::vector<int> row_country() const;

    bool operator==(const MortalityPanel& other) const;

private:
    std::vector<AgeGroup> ages_;
    std::vector<CountrySeries> series_;
    Eigen::MatrixXd q_;
};

/// Reads the long CSV layout `country,time,age,qx` (header required).
[[nodiscard]] MortalityPanel load_panel(const std::filesystem::path& path);
[[nodiscard]] MortalityPanel parse_panel(const std::string& text);

/// Writes the long CSV layout with round-trip-exact numbers.
void write_panel(const MortalityPanel& panel, const std::filesystem::path& path);
[[nodiscard]] std::string format_panel(const MortalityPanel& panel);

/// Optional `{"<id>": "<display name>"}` sidecar. Not used by the model.
[[nodiscard]] std::map<std::string, std::string> load_display_names(
    const std::filesystem::path& path);

/// Kendall's tau; +1 for a strictly increasing series, ties count as 0.
/// Throws InsufficientDataError for fewer than 2 values.
[[nodiscard]] double kendall_tau(std::span<const double> series);

/// Per (country, age) Kendall's tau of the probability series over time.
struct TrendTable {
    std::vector<std::string> countries;
    std::vector<AgeGroup> ages;
    Eigen::MatrixXd tau;  // countries x ages
};
[[nodiscard]] TrendTable trend_table(const MortalityPanel& panel);

enum class Scale { raw, logit };

/// Pearson correlations between age-group columns over all country-period rows.
/// Throws UndefinedStatisticError naming the age group of a constant column.
[[nodiscard]] Eigen::MatrixXd correlation_matrix(const MortalityPanel& panel, Scale scale);

/// Entrywise logit; with `centred`, each column has mean zero.
[[nodiscard]] Eigen::MatrixXd logit_transform(const MortalityPanel& panel, bool centred);

}  // namespace blv
