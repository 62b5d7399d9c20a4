#include "bets/timeline.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <functional>
#include <iomanip>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>

namespace bets {

namespace {

using namespace std::chrono;

constexpr sys_days kOrigin = sys_days{year{2019} / November / 30};

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

bool is_missing(const std::string& s) {
  const std::string v = lower(trim(s));
  return v.empty() || v == "na" || v == "n/a" || v == "nan" || v == "unknown" || v == "?";
}

std::optional<int> to_int(const std::string& s) {
  const std::string t = trim(s);
  int value = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), value);
  if (ec != std::errc{} || ptr != t.data() + t.size()) return std::nullopt;
  return value;
}

std::optional<unsigned> month_from_abbrev(const std::string& text) {
  static const std::array<const char*, 12> names = {"jan", "feb", "mar", "apr", "may", "jun",
                                                    "jul", "aug", "sep", "oct", "nov", "dec"};
  const std::string m = lower(text).substr(0, 3);
  for (unsigned i = 0; i < names.size(); ++i) {
    if (m == names[i]) return i + 1;
  }
  return std::nullopt;
}

}  // namespace

EpochDay to_epoch(Date date) {
  if (!date.ok()) throw std::domain_error("to_epoch: invalid calendar date");
  const auto days_since = (sys_days{date} - kOrigin).count();
  if (days_since < 0) {
    throw std::domain_error("to_epoch: date " + format_date(date) + " is before 2019-11-30");
  }
  return EpochDay{static_cast<int>(days_since)};
}

Date from_epoch(EpochDay day) {
  if (day.is_infinite()) throw std::domain_error("from_epoch: infinite day has no calendar date");
  return Date{kOrigin + days{day.value}};
}

std::optional<Date> parse_date(const std::string& raw) {
  const std::string text = trim(raw);
  if (text.empty()) return std::nullopt;
  std::vector<std::string> parts;
  std::stringstream ss(text);
  for (std::string p; std::getline(ss, p, '-');) parts.push_back(p);

  Date d{};
  if (parts.size() == 3 && parts[0].size() == 4) {
    const auto y = to_int(parts[0]), m = to_int(parts[1]), dd = to_int(parts[2]);
    if (!y || !m || !dd) return std::nullopt;
    d = Date{year{*y}, month{static_cast<unsigned>(*m)}, day{static_cast<unsigned>(*dd)}};
  } else if (parts.size() == 2 || parts.size() == 3) {
    const auto dd = to_int(parts[0]);
    const auto m = month_from_abbrev(parts[1]);
    if (!dd || !m || parts[1].size() < 3) return std::nullopt;
    int y = (*m >= 11) ? 2019 : 2020;
    if (parts.size() == 3) {
      const auto yy = to_int(parts[2]);
      if (!yy) return std::nullopt;
      y = *yy < 100 ? 2000 + *yy : *yy;
    }
    d = Date{year{y}, month{*m}, day{static_cast<unsigned>(*dd)}};
  } else {
    return std::nullopt;
  }
  if (!d.ok()) return std::nullopt;
  return d;
}

std::string format_date(Date date) {
  std::ostringstream os;
  os << std::setfill('0') << std::setw(4) << int(date.year()) << '-' << std::setw(2)
     << unsigned(date.month()) << '-' << std::setw(2) << unsigned(date.day());
  return os.str();
}

std::string to_string(Gender g) {
  switch (g) {
    case Gender::male: return "male";
    case Gender::female: return "female";
    default: return "unknown";
  }
}

std::string to_string(AgeGroup a) {
  switch (a) {
    case AgeGroup::under50: return "under50";
    case AgeGroup::over50: return "over50";
    default: return "unknown";
  }
}

std::string to_string(Outside o) {
  switch (o) {
    case Outside::yes: return "yes";
    case Outside::likely: return "likely";
    default: return "no";
  }
}

Gender parse_gender(const std::string& text) {
  const std::string g = lower(trim(text));
  if (g == "male" || g == "m") return Gender::male;
  if (g == "female" || g == "f") return Gender::female;
  return Gender::unknown;
}

AgeGroup parse_age_group(const std::string& text) {
  const std::string a = lower(trim(text));
  if (a == "under50") return AgeGroup::under50;
  if (a == "over50") return AgeGroup::over50;
  return AgeGroup::unknown;
}

CaseRecord make_case_record(std::string id, int B_int, int E_int, int S_int) {
  CaseRecord rec;
  rec.case_id = std::move(id);
  rec.B_int = B_int;
  rec.E_int = E_int;
  rec.S_int = S_int;
  rec.B = B_int == 0 ? 0.0 : B_int - 0.75;
  rec.E = E_int - 0.25;
  rec.S = S_int - 0.5;
  return rec;
}

std::vector<std::string> split_delimited(const std::string& line, char delimiter) {
  std::vector<std::string> fields;
  std::string current;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          current += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        current += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == delimiter) {
      fields.push_back(current);
      current.clear();
    } else if (c != '\r') {
      current += c;
    }
  }
  fields.push_back(current);
  return fields;
}

std::vector<RawCase> parse_case_table(std::istream& in, const TableFormat& format) {
  std::string line;
  if (!std::getline(in, line)) throw TableParseError("empty case table: missing header", 0);
  if (line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);

  std::map<std::string, std::size_t> column;
  const auto header = split_delimited(line, format.delimiter);
  for (std::size_t i = 0; i < header.size(); ++i) column[lower(trim(header[i]))] = i;

  const std::vector<std::pair<std::string, std::string>> required = {
      {"case", "Case"},           {"residence", "Residence"}, {"outside", "Outside"},
      {"begin wuhan", "Begin Wuhan"}, {"end wuhan", "End Wuhan"}, {"arrived", "Arrived"},
      {"symptom", "Symptom"},     {"confirmed", "Confirmed"}};
  for (const auto& [key, name] : required) {
    if (!column.count(key)) throw TableParseError("missing column: " + name, 0);
  }
  const auto col = [&](const std::string& key) -> std::optional<std::size_t> {
    const auto it = column.find(key);
    if (it == column.end()) return std::nullopt;
    return it->second;
  };

  std::vector<RawCase> cases;
  int row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto fields = split_delimited(line, format.delimiter);
    const auto field = [&](const std::string& key) -> std::string {
      const auto idx = col(key);
      if (!idx || *idx >= fields.size()) return {};
      return trim(fields[*idx]);
    };
    const auto date_field = [&](const std::string& key) -> std::optional<Date> {
      const std::string v = field(key);
      if (is_missing(v)) return std::nullopt;
      return parse_date(v);
    };

    RawCase c;
    c.case_id = field("case");
    if (c.case_id.empty()) {
      throw TableParseError("row " + std::to_string(row) + ": missing case identifier", row);
    }
    const auto confirmed = date_field("confirmed");
    if (!confirmed) {
      throw TableParseError("row " + std::to_string(row) + " (" + c.case_id +
                                "): unparseable Confirmed date '" + field("confirmed") + "'",
                            row);
    }
    c.confirmed = *confirmed;
    c.residence = field("residence");
    c.gender = parse_gender(field("gender"));
    if (const std::string age = field("age"); !is_missing(age)) c.age = to_int(age);
    const std::string contact = lower(field("known contact"));
    c.known_contact = contact == "yes" || contact == "y" || contact == "true" || contact == "1";
    if (const std::string cl = field("cluster"); !is_missing(cl)) c.cluster = cl;
    const std::string outside = lower(field("outside"));
    if (outside == "yes") c.outside = Outside::yes;
    else if (outside == "likely") c.outside = Outside::likely;
    else if (outside == "no") c.outside = Outside::no;
    c.begin_wuhan = date_field("begin wuhan");
    c.end_wuhan = date_field("end wuhan");
    c.arrived = date_field("arrived");
    c.symptom = date_field("symptom");
    c.initial = date_field("initial");
    c.location = field("location");
    if (c.location.empty()) {
      const auto dash = c.case_id.rfind('-');
      c.location = dash == std::string::npos ? std::string{} : c.case_id.substr(0, dash);
    }
    cases.push_back(std::move(c));
  }
  return cases;
}

ClusterContext build_cluster_context(const std::vector<RawCase>& cases) {
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < cases.size(); ++i) index.emplace(cases[i].case_id, i);

  std::vector<std::size_t> parent(cases.size());
  std::iota(parent.begin(), parent.end(), 0);
  std::function<std::size_t(std::size_t)> find = [&](std::size_t i) {
    return parent[i] == i ? i : parent[i] = find(parent[i]);
  };
  const auto unite = [&](std::size_t a, std::size_t b) { parent[find(a)] = find(b); };

  std::map<std::string, std::size_t> free_text_key;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (!cases[i].cluster) continue;
    const std::string& text = *cases[i].cluster;
    bool linked = false;
    std::string token;
    const auto flush = [&] {
      if (!token.empty()) {
        const auto it = index.find(token);
        if (it != index.end() && it->second != i) {
          unite(i, it->second);
          linked = true;
        }
      }
      token.clear();
    };
    for (char ch : text) {
      if (std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' || ch == '_') token += ch;
      else flush();
    }
    flush();
    if (!linked) {
      const auto [it, inserted] = free_text_key.emplace(trim(text), i);
      if (!inserted) unite(i, it->second);
    }
  }

  ClusterContext ctx;
  std::map<std::size_t, std::size_t> size;
  for (std::size_t i = 0; i < cases.size(); ++i) ++size[find(i)];
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const std::size_t root = find(i);
    if (size[root] < 2) continue;
    const std::string key = cases[root].case_id;
    ctx.clusters[key].push_back({cases[i].case_id, cases[i].symptom});
    ctx.membership[cases[i].case_id] = key;
  }
  return ctx;
}

Outside classify_outside(const RawCase& c, const ClusterContext& context) {
  const Date window_begin{year{2019} / December / 1};
  const Date window_end{year{2020} / January / 23};

  const bool resident = lower(trim(c.residence)) == "wuhan";
  const bool has_stay = resident || c.begin_wuhan || c.end_wuhan;
  if (!has_stay) return Outside::yes;
  if (c.end_wuhan && sys_days{*c.end_wuhan} < sys_days{window_begin}) return Outside::yes;
  if (c.begin_wuhan && sys_days{*c.begin_wuhan} > sys_days{window_end}) return Outside::yes;
  if (context.contact_before_or_during_travel.count(c.case_id)) return Outside::yes;

  if (!c.symptom) return Outside::no;
  const Date stay_end = c.end_wuhan.value_or(window_end);
  const bool after_begin = !c.begin_wuhan || sys_days{*c.symptom} >= sys_days{*c.begin_wuhan};
  if (after_begin && sys_days{*c.symptom} <= sys_days{stay_end}) return Outside::no;

  const auto member_of = context.membership.find(c.case_id);
  if (member_of == context.membership.end()) return Outside::no;
  for (const auto& m : context.clusters.at(member_of->second)) {
    if (m.case_id == c.case_id || !m.symptom) continue;
    if (sys_days{*m.symptom} < sys_days{*c.symptom}) return Outside::likely;
  }
  return Outside::no;
}

std::size_t ExclusionReport::count(const std::string& rule) const {
  for (const auto& [name, n] : excluded) {
    if (name == rule) return n;
  }
  return 0;
}

Cohort build_cohort(const std::vector<RawCase>& cases, const InclusionRules& rules) {
  Cohort out;
  out.report.input = cases.size();
  const ClusterContext context = build_cluster_context(cases);
  const Date quarantine{year{2020} / January / 23};

  std::map<std::string, std::size_t> dropped;
  const std::vector<std::string> order = {
      "location",         "outside",           "arrived_after_quarantine",
      "missing_symptom",  "unknown_exposure_start", "exposure_after_quarantine",
      "no_exposure_window", "onset_before_exposure"};
  for (const auto& name : order) dropped[name] = 0;

  std::size_t symptom_denominator = 0;
  for (const RawCase& c : cases) {
    if (!rules.location.empty() && c.location != rules.location) {
      ++dropped["location"];
      continue;
    }
    const Outside outside = c.outside.value_or(classify_outside(c, context));
    if (rules.keep_only_outside_no && outside != Outside::no) {
      ++dropped["outside"];
      continue;
    }
    if (rules.drop_late_arrivals && c.arrived && sys_days{*c.arrived} > sys_days{quarantine}) {
      ++dropped["arrived_after_quarantine"];
      continue;
    }
    ++symptom_denominator;
    if (!c.symptom) {
      ++dropped["missing_symptom"];
      continue;
    }

    int B_int = 0;
    if (c.begin_wuhan) {
      B_int = sys_days{*c.begin_wuhan} < kOrigin ? 0 : to_epoch(*c.begin_wuhan).value;
    } else if (lower(trim(c.residence)) != "wuhan") {
      ++dropped["unknown_exposure_start"];
      continue;
    }
    int E_int = kHorizon;
    if (c.end_wuhan) {
      if (sys_days{*c.end_wuhan} > sys_days{quarantine}) {
        ++dropped["exposure_after_quarantine"];
        continue;
      }
      if (sys_days{*c.end_wuhan} < kOrigin + days{1}) {
        ++dropped["no_exposure_window"];
        continue;
      }
      E_int = to_epoch(*c.end_wuhan).value;
    } else if (rules.impute_missing_end) {
      ++out.report.imputed_end;
    } else {
      ++dropped["no_exposure_window"];
      continue;
    }
    if (E_int < B_int) {
      ++dropped["no_exposure_window"];
      continue;
    }
    if (sys_days{*c.symptom} < kOrigin + days{std::max(B_int, 1)}) {
      ++dropped["onset_before_exposure"];
      continue;
    }
    const int S_int = to_epoch(*c.symptom).value;

    CaseRecord rec = make_case_record(c.case_id, B_int, E_int, S_int);
    rec.gender = c.gender;
    rec.age_group = !c.age ? AgeGroup::unknown : (*c.age >= 50 ? AgeGroup::over50 : AgeGroup::under50);
    rec.C_int = sys_days{c.confirmed} < kOrigin ? 0 : to_epoch(c.confirmed).value;
    rec.location = c.location;
    out.cases.push_back(std::move(rec));
  }

  out.report.kept = out.cases.size();
  for (const auto& name : order) out.report.excluded.emplace_back(name, dropped[name]);
  out.report.missing_symptom_fraction =
      symptom_denominator == 0 ? 0.0
                               : static_cast<double>(dropped["missing_symptom"]) / symptom_denominator;
  return out;
}

void write_cohort_csv(std::ostream& out, const std::vector<CaseRecord>& cases) {
  out << "case_id,B_int,E_int,S_int,B,E,S,gender,age_group,C_int,location\n";
  for (const auto& c : cases) {
    out << c.case_id << ',' << c.B_int << ',' << c.E_int << ',' << c.S_int << ',' << c.B << ','
        << c.E << ',' << c.S << ',' << to_string(c.gender) << ',' << to_string(c.age_group) << ','
        << c.C_int << ',' << c.location << '\n';
  }
}

std::vector<CaseRecord> read_cohort_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw TableParseError("empty cohort file", 0);
  std::map<std::string, std::size_t> column;
  const auto header = split_delimited(line, ',');
  for (std::size_t i = 0; i < header.size(); ++i) column[lower(trim(header[i]))] = i;
  for (const char* key : {"case_id", "b_int", "e_int", "s_int"}) {
    if (!column.count(key)) throw TableParseError(std::string("missing column: ") + key, 0);
  }

  std::vector<CaseRecord> cases;
  int row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row;
    const auto fields = split_delimited(line, ',');
    const auto field = [&](const std::string& key) -> std::string {
      const auto it = column.find(key);
      if (it == column.end() || it->second >= fields.size()) return {};
      return trim(fields[it->second]);
    };
    const auto integer = [&](const std::string& key) {
      const auto v = to_int(field(key));
      if (!v) throw TableParseError("row " + std::to_string(row) + ": bad integer in " + key, row);
      return *v;
    };
    CaseRecord rec = make_case_record(field("case_id"), integer("b_int"), integer("e_int"),
                                      integer("s_int"));
    rec.gender = parse_gender(field("gender"));
    rec.age_group = parse_age_group(field("age_group"));
    rec.C_int = column.count("c_int") ? integer("c_int") : rec.S_int;
    rec.location = field("location");
    cases.push_back(std::move(rec));
  }
  return cases;
}

}  // namespace bets
