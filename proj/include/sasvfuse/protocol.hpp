#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sasvfuse/error.hpp"

namespace sasvfuse {

enum class TrialLabel { Target = 0, NonTarget = 1, Spoof = 2 };

inline constexpr std::array<TrialLabel, 3> kAllLabels{TrialLabel::Target, TrialLabel::NonTarget,
                                                      TrialLabel::Spoof};

inline std::string_view to_string(TrialLabel label) {
    switch (label) {
        case TrialLabel::Target: return "target";
        case TrialLabel::NonTarget: return "nontarget";
        case TrialLabel::Spoof: return "spoof";
    }
    return "?";
}

inline std::optional<TrialLabel> parse_label(std::string_view token) {
    if (token == "target") return TrialLabel::Target;
    if (token == "nontarget") return TrialLabel::NonTarget;
    if (token == "spoof") return TrialLabel::Spoof;
    return std::nullopt;
}

struct TrialRecord {
    std::string enroll_id;
    std::string test_id;
    TrialLabel label = TrialLabel::Target;

    friend bool operator==(const TrialRecord&, const TrialRecord&) = default;
};

inline bool is_valid_identifier(std::string_view id) {
    if (id.empty()) return false;
    for (char c : id) {
        if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f') return false;
    }
    return true;
}

/// Ordered trials plus per-label tallies. Mutate only through add() so the
/// tallies always match the records.
class TrialList {
public:
    TrialList() = default;
    explicit TrialList(std::vector<TrialRecord> records) {
        for (auto& r : records) add(std::move(r));
    }

    void add(TrialRecord record) {
        if (!is_valid_identifier(record.enroll_id) || !is_valid_identifier(record.test_id)) {
            throw Error("protocol", "invalid identifier in trial '" + record.enroll_id + " " +
                                        record.test_id + "'");
        }
        ++counts_[static_cast<std::size_t>(record.label)];
        records_.push_back(std::move(record));
    }

    const std::vector<TrialRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    const TrialRecord& operator[](std::size_t i) const { return records_[i]; }
    std::size_t count(TrialLabel label) const { return counts_[static_cast<std::size_t>(label)]; }
    const std::array<std::size_t, 3>& counts() const { return counts_; }

    auto begin() const { return records_.begin(); }
    auto end() const { return records_.end(); }

    friend bool operator==(const TrialList&, const TrialList&) = default;

private:
    std::vector<TrialRecord> records_;
    std::array<std::size_t, 3> counts_{0, 0, 0};
};

namespace detail {

inline std::vector<std::string_view> split_ws(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < line.size()) {
        while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
        if (i >= line.size()) break;
        std::size_t j = i;
        while (j < line.size() && line[j] != ' ' && line[j] != '\t') ++j;
        out.push_back(line.substr(i, j - i));
        i = j;
    }
    return out;
}

/// Calls fn(line_number, line) for every line with CR stripped, skipping
/// blank and '#' comment lines. Line numbers are 1-based.
template <typename Fn>
void for_each_data_line(std::string_view text, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string_view::npos) eol = text.size();
        std::string_view line = text.substr(pos, eol - pos);
        pos = eol + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        std::size_t first = line.find_first_not_of(" \t");
        if (first == std::string_view::npos || line[first] == '#') continue;
        fn(line_no, line);
    }
}

}  // namespace detail

/// Parses the 3-column trial grammar: `enroll_id test_id label`.
/// A repeated (enroll_id, test_id) pair must carry the same label.
inline TrialList parse_trials(std::string_view text) {
    TrialList list;
    std::map<std::pair<std::string, std::string>, std::pair<TrialLabel, std::size_t>> seen;
    detail::for_each_data_line(text, [&](std::size_t line_no, std::string_view line) {
        auto fields = detail::split_ws(line);
        if (fields.size() != 3) {
            throw ParseError("protocol",
                             "malformed trial at line " + std::to_string(line_no) + ": expected 3 fields, got " +
                                 std::to_string(fields.size()),
                             line_no);
        }
        auto label = parse_label(fields[2]);
        if (!label) {
            throw ParseError("protocol",
                             "unknown label '" + std::string(fields[2]) + "' at line " + std::to_string(line_no),
                             line_no);
        }
        TrialRecord rec{std::string(fields[0]), std::string(fields[1]), *label};
        auto [it, inserted] = seen.try_emplace({rec.enroll_id, rec.test_id}, *label, line_no);
        if (!inserted && it->second.first != *label) {
            throw ParseError("protocol",
                             "contradictory duplicate trial '" + rec.enroll_id + " " + rec.test_id + "' at line " +
                                 std::to_string(line_no) + " (line " + std::to_string(it->second.second) +
                                 " says " + std::string(to_string(it->second.first)) + ")",
                             line_no);
        }
        list.add(std::move(rec));
    });
    return list;
}

inline std::string write_trials(const TrialList& list) {
    std::string out;
    for (const auto& r : list) {
        out += r.enroll_id;
        out += ' ';
        out += r.test_id;
        out += ' ';
        out += to_string(r.label);
        out += '\n';
    }
    return out;
}

}  // namespace sasvfuse
