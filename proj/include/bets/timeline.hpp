#pragma once

#include <chrono>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

namespace bets {

/// Horizon: the outbound travel ban starts at the end of epoch day 54
/// (January 23, 2020).
inline constexpr int kHorizon = 54;
/// Epoch day of January 20, 2020.
inline constexpr int kFirstStageEnd = 51;
/// Epoch day of January 10, 2020 (start of the New Year travel season).
inline constexpr int kChunyunStart = 41;

using Date = std::chrono::year_month_day;

/// Integer day count with day 0 = 2019-11-30. Day 1 covers December 1.
struct EpochDay {
  static constexpr int kInfinite = 1 << 30;
  int value = 0;

  constexpr bool is_infinite() const { return value == kInfinite; }
  friend constexpr auto operator<=>(EpochDay, EpochDay) = default;
};

inline constexpr EpochDay kInfiniteDay{EpochDay::kInfinite};

/// Throws std::domain_error for dates before 2019-11-30.
EpochDay to_epoch(Date date);
Date from_epoch(EpochDay day);

/// Accepts ISO-8601 ("2020-01-22") and day-month ("22-Jan") strings; the
/// year of a day-month string is 2019 for Nov/Dec and 2020 otherwise.
std::optional<Date> parse_date(const std::string& text);
std::string format_date(Date date);

enum class Gender { male, female, unknown };
enum class AgeGroup { under50, over50, unknown };
enum class Outside { yes, likely, no };

std::string to_string(Gender g);
std::string to_string(AgeGroup a);
std::string to_string(Outside o);
Gender parse_gender(const std::string& text);
AgeGroup parse_age_group(const std::string& text);

struct RawCase {
  std::string case_id;
  std::string residence;
  Gender gender = Gender::unknown;
  std::optional<int> age;
  bool known_contact = false;
  std::optional<std::string> cluster;
  /// Absent when the table leaves the column empty; filled in by
  /// classify_outside during cohort construction.
  std::optional<Outside> outside;
  std::optional<Date> begin_wuhan;
  std::optional<Date> end_wuhan;
  std::optional<Date> arrived;
  std::optional<Date> symptom;
  std::optional<Date> initial;
  Date confirmed{};
  std::string location;
};

struct CaseRecord {
  std::string case_id;
  int B_int = 0;
  int E_int = 0;
  int S_int = 0;
  double B = 0.0;
  double E = 0.0;
  double S = 0.0;
  Gender gender = Gender::unknown;
  AgeGroup age_group = AgeGroup::unknown;
  /// Confirmation day; used for retrospective sweeps.
  int C_int = 0;
  std::string location;

  bool wuhan_resident() const { return B_int == 0; }
};

/// Builds a record from integer days, applying the half-day offsets
/// B - 3/4, E - 1/4, S - 1/2 (B_int = 0 stays at the atom B = 0).
CaseRecord make_case_record(std::string id, int B_int, int E_int, int S_int);

struct TableFormat {
  char delimiter = ',';
};

class TableParseError : public std::runtime_error {
 public:
  TableParseError(const std::string& what, int row) : std::runtime_error(what), row_(row) {}
  /// 1-based data row, or 0 for header errors.
  int row() const { return row_; }

 private:
  int row_;
};

/// Parses a delimited case table with a header row (column names matched
/// case-insensitively). Required columns: Case, Residence, Outside,
/// Begin Wuhan, End Wuhan, Arrived, Symptom, Confirmed. Gender, Age,
/// Known Contact, Cluster, Initial and Location are optional.
std::vector<RawCase> parse_case_table(std::istream& in, const TableFormat& format = {});

struct ClusterMember {
  std::string case_id;
  std::optional<Date> symptom;
};

struct ClusterContext {
  /// cluster id -> members
  std::map<std::string, std::vector<ClusterMember>> clusters;
  /// case id -> cluster id
  std::map<std::string, std::string> membership;
  /// Cases whose recorded contact happened before or during travel.
  std::set<std::string> contact_before_or_during_travel;
};

/// Groups cases into clusters: a case's Cluster text joins it with every
/// case id it mentions, and the text itself is used as a cluster key when
/// it mentions no known id.
ClusterContext build_cluster_context(const std::vector<RawCase>& cases);

Outside classify_outside(const RawCase& c, const ClusterContext& context);

struct InclusionRules {
  bool keep_only_outside_no = true;
  bool drop_late_arrivals = true;
  bool impute_missing_end = true;
  /// Optional location filter (exact match); empty keeps all.
  std::string location;
};

struct ExclusionReport {
  std::size_t input = 0;
  std::size_t kept = 0;
  /// Rule name -> number of cases dropped by that rule, in application order.
  std::vector<std::pair<std::string, std::size_t>> excluded;
  std::size_t imputed_end = 0;
  /// Fraction of cases surviving the outside/arrival filters that lack a
  /// symptom onset date.
  double missing_symptom_fraction = 0.0;

  std::size_t count(const std::string& rule) const;
};

struct Cohort {
  std::vector<CaseRecord> cases;
  ExclusionReport report;
};

Cohort build_cohort(const std::vector<RawCase>& cases, const InclusionRules& rules = {});

/// Cohort table I/O: case_id,B_int,E_int,S_int,B,E,S,gender,age_group,C_int,location
void write_cohort_csv(std::ostream& out, const std::vector<CaseRecord>& cases);
std::vector<CaseRecord> read_cohort_csv(std::istream& in);

/// Splits one delimited line, honouring double-quoted fields.
std::vector<std::string> split_delimited(const std::string& line, char delimiter);

}  // namespace bets
