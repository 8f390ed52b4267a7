// Copyright 2026 The e2est Authors
// SPDX-License-Identifier: Apache-2.0

#include "e2est/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "e2est/errors.hpp"
#include "json.hpp"

namespace e2est {

namespace {

void check_corpus(const std::vector<std::string>& hyps, const std::vector<std::string>& refs) {
  if (hyps.empty()) throw DataError("empty corpus");
  if (hyps.size() != refs.size()) {
    throw DataError("corpus size mismatch: " + std::to_string(hyps.size()) + " hypotheses, " +
                    std::to_string(refs.size()) + " references");
  }
}

using Ngram = std::vector<std::string>;

std::map<Ngram, std::size_t> ngram_counts(const Words& w, std::size_t n) {
  std::map<Ngram, std::size_t> counts;
  for (std::size_t i = 0; i + n <= w.size(); ++i) ++counts[Ngram(w.begin() + i, w.begin() + i + n)];
  return counts;
}

// ---- TER ----

constexpr int kMaxShiftSize = 10;
constexpr int kMaxShiftDist = 50;

enum class Op { kMatch, kSub, kIns, kDel };

using Ids = std::vector<int>;

int edit_path(const Ids& hyp, const Ids& ref, std::vector<Op>* path) {
  const std::size_t H = hyp.size(), R = ref.size();
  std::vector<std::vector<int>> cost(H + 1, std::vector<int>(R + 1, 0));
  std::vector<std::vector<Op>> back(H + 1, std::vector<Op>(R + 1, Op::kMatch));
  for (std::size_t i = 0; i <= H; ++i) cost[i][0] = static_cast<int>(i);
  for (std::size_t j = 0; j <= R; ++j) cost[0][j] = static_cast<int>(j);
  for (std::size_t i = 1; i <= H; ++i) {
    for (std::size_t j = 1; j <= R; ++j) {
      int& c = cost[i][j];
      Op& b = back[i][j];
      if (hyp[i - 1] == ref[j - 1]) {
        c = cost[i - 1][j - 1];
        b = Op::kMatch;
      } else {
        c = cost[i - 1][j - 1] + 1;
        b = Op::kSub;
      }
      if (c > cost[i - 1][j] + 1) {
        c = cost[i - 1][j] + 1;
        b = Op::kIns;
      }
      if (c > cost[i][j - 1] + 1) {
        c = cost[i][j - 1] + 1;
        b = Op::kDel;
      }
    }
  }
  if (path) {
    path->clear();
    std::size_t i = H, j = R;
    while (i > 0 || j > 0) {
      Op t = j == 0 ? Op::kIns : i == 0 ? Op::kDel : back[i][j];
      path->push_back(t);
      if (t == Op::kMatch || t == Op::kSub) {
        --i;
        --j;
      } else if (t == Op::kIns) {
        --i;
      } else {
        --j;
      }
    }
    std::reverse(path->begin(), path->end());
  }
  return cost[H][R];
}

struct Shift {
  int begin, end, moveto;
};

Ids perform_shift(const Ids& in, int start, int end, int moveto) {
  Ids out;
  out.reserve(in.size());
  const int n = static_cast<int>(in.size());
  auto copy = [&](int from, int to) {
    for (int i = from; i <= to && i < n; ++i) out.push_back(in[i]);
  };
  if (moveto == -1) {
    copy(start, end);
    copy(0, start - 1);
    copy(end + 1, n - 1);
  } else if (moveto < start) {
    copy(0, moveto);
    copy(start, end);
    copy(moveto + 1, start - 1);
    copy(end + 1, n - 1);
  } else if (moveto > end) {
    copy(0, start - 1);
    copy(end + 1, moveto);
    copy(start, end);
    copy(moveto + 1, n - 1);
  } else {
    copy(0, start - 1);
    copy(end + 1, end + (moveto - start));
    copy(start, end);
    copy(end + (moveto - start) + 1, n - 1);
  }
  return out;
}

class TerSearch {
 public:
  explicit TerSearch(const Ids& ref) : ref_(ref) {}

  TerEdits run(const Ids& hyp) {
    build_matches(hyp);
    std::vector<Op> path;
    int med = edit_path(hyp, ref_, &path);
    Ids cur = hyp;
    TerEdits e;
    while (true) {
      Ids next;
      std::vector<Op> next_path;
      int next_med = 0;
      if (!best_shift(cur, med, path, &next, &next_med, &next_path)) break;
      ++e.shifts;
      med = next_med;
      path.swap(next_path);
      cur.swap(next);
    }
    for (Op op : path) {
      if (op == Op::kSub) ++e.substitutions;
      if (op == Op::kIns) ++e.insertions;
      if (op == Op::kDel) ++e.deletions;
    }
    return e;
  }

 private:
  // Reference n-grams (up to the max shift size) built from words present on both sides.
  void build_matches(const Ids& hyp) {
    matches_.clear();
    const std::set<int> in_ref(ref_.begin(), ref_.end());
    std::set<int> both;
    for (int w : hyp) {
      if (in_ref.count(w)) both.insert(w);
    }
    for (int start = 0; start < static_cast<int>(ref_.size()); ++start) {
      if (!both.count(ref_[start])) continue;
      Ids cp;
      const int mlen = std::min(kMaxShiftSize, static_cast<int>(ref_.size()) - start);
      for (int len = 0; len < mlen; ++len) {
        if (len && !both.count(ref_[start + len])) break;
        cp.push_back(ref_[start + len]);
        matches_[cp].insert(start);
      }
    }
  }

  void candidate_shifts(const Ids& hyp, const std::vector<int>& ralign, const std::vector<bool>& herr,
                        const std::vector<bool>& rerr, std::vector<std::vector<Shift>>& shifts) const {
    const int H = static_cast<int>(hyp.size());
    for (int start = 0; start < H; ++start) {
      auto it = matches_.find(Ids{hyp[start]});
      if (it == matches_.end()) continue;
      bool ok = false;
      for (int moveto : it->second) {
        const int rm = ralign[moveto];
        ok = start != rm && (rm - start) < kMaxShiftDist && (start - rm - 1) < kMaxShiftDist;
        if (ok) break;
      }
      if (!ok) continue;
      Ids cp;
      for (int end = start; ok && end < H && end < start + kMaxShiftSize; ++end) {
        cp.push_back(hyp[end]);
        auto& bucket = shifts[end - start];
        ok = false;
        auto m = matches_.find(cp);
        if (m == matches_.end()) break;
        bool any_herr = false;
        for (int i = start; i <= end && !any_herr; ++i) any_herr = herr[i];
        if (!any_herr) {
          ok = true;
          continue;
        }
        for (int moveto : m->second) {
          const int rm = ralign[moveto];
          if (!(rm != start && (rm < start || rm > end) && rm - start <= kMaxShiftDist &&
                start - rm - 1 <= kMaxShiftDist)) {
            continue;
          }
          ok = true;
          bool any_rerr = false;
          for (int i = 0; i <= end - start && !any_rerr; ++i) any_rerr = rerr[moveto + i];
          if (!any_rerr) continue;
          for (int roff = 0; roff <= end - start; ++roff) {
            const int rmr = ralign[moveto + roff];
            if (start != rmr && (roff == 0 || rmr != ralign[moveto])) bucket.push_back({start, end, moveto + roff});
          }
        }
      }
    }
  }

  bool best_shift(const Ids& cur, int curerr, const std::vector<Op>& path, Ids* new_hyp, int* newerr,
                  std::vector<Op>* new_path) const {
    std::vector<bool> herr, rerr;
    std::vector<int> ralign;
    int hpos = -1;
    for (Op op : path) {
      switch (op) {
        case Op::kMatch:
        case Op::kSub:
          ++hpos;
          herr.push_back(op == Op::kSub);
          rerr.push_back(op == Op::kSub);
          ralign.push_back(hpos);
          break;
        case Op::kIns:
          ++hpos;
          herr.push_back(true);
          break;
        case Op::kDel:
          rerr.push_back(true);
          ralign.push_back(hpos);
          break;
      }
    }
    std::vector<std::vector<Shift>> shifts(kMaxShiftSize + 1);
    candidate_shifts(cur, ralign, herr, rerr, shifts);
    int best_shift_cost = 0;
    *newerr = curerr;
    bool found = false;
    for (int i = static_cast<int>(shifts.size()) - 1; i >= 0; --i) {
      const int maxfix = 2 * (1 + i) - 1;
      int curfix = curerr - (best_shift_cost + *newerr);
      if (curfix > maxfix || (best_shift_cost == 0 && curfix == maxfix)) break;
      for (const Shift& s : shifts[i]) {
        curfix = curerr - (best_shift_cost + *newerr);
        if (curfix > maxfix || (best_shift_cost == 0 && curfix == maxfix)) continue;
        Ids shifted = perform_shift(cur, s.begin, s.end, ralign[s.moveto]);
        std::vector<Op> try_path;
        const int try_cost = edit_path(shifted, ref_, &try_path);
        const int gain = (*newerr + best_shift_cost) - (try_cost + 1);
        if (gain > 0 || (best_shift_cost == 0 && gain == 0)) {
          *newerr = try_cost;
          best_shift_cost = 1;
          new_path->swap(try_path);
          new_hyp->swap(shifted);
          found = true;
        }
      }
    }
    return found;
  }

  Ids ref_;
  std::map<Ids, std::set<int>> matches_;
};

std::pair<Ids, Ids> to_ids(const Words& hyp, const Words& ref) {
  std::map<std::string, int> dict;
  auto id = [&](const std::string& w) { return dict.emplace(w, static_cast<int>(dict.size())).first->second; };
  Ids h, r;
  for (const auto& w : ref) r.push_back(id(w));
  for (const auto& w : hyp) h.push_back(id(w));
  return {h, r};
}

RatioResult ratio(std::size_t edits, std::size_t ref_words) {
  if (ref_words == 0) throw DataError("reference corpus has no words");
  return {100.0 * static_cast<double>(edits) / static_cast<double>(ref_words), edits, ref_words};
}

}  // namespace

Words tokenize(std::string_view line, bool case_sensitive) {
  Words out;
  std::istringstream is{std::string(line)};
  std::string w;
  while (is >> w) {
    if (!case_sensitive) {
      std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return std::tolower(c); });
    }
    out.push_back(std::move(w));
  }
  return out;
}

BleuResult bleu(const std::vector<std::string>& hyps, const std::vector<std::string>& refs, bool case_sensitive) {
  check_corpus(hyps, refs);
  BleuResult r;
  std::array<std::size_t, 4> ref_totals{};
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    const Words h = tokenize(hyps[s], case_sensitive);
    const Words f = tokenize(refs[s], case_sensitive);
    r.hyp_length += h.size();
    r.ref_length += f.size();
    for (std::size_t n = 1; n <= 4; ++n) {
      const auto hc = ngram_counts(h, n);
      const auto rc = ngram_counts(f, n);
      for (const auto& [g, c] : hc) {
        auto it = rc.find(g);
        if (it != rc.end()) r.matches[n - 1] += std::min(c, it->second);
        r.totals[n - 1] += c;
      }
      if (f.size() >= n) ref_totals[n - 1] += f.size() - n + 1;
    }
  }
  double log_sum = 0.0;
  std::size_t orders = 0;
  bool zero = r.hyp_length == 0;
  for (std::size_t n = 0; n < 4; ++n) {
    if (r.totals[n] == 0) {
      if (ref_totals[n] == 0) continue;
      zero = true;
      continue;
    }
    r.precisions[n] = static_cast<double>(r.matches[n]) / static_cast<double>(r.totals[n]);
    if (r.matches[n] == 0) zero = true;
    else log_sum += std::log(r.precisions[n]);
    ++orders;
  }
  if (r.hyp_length == 0) r.brevity_penalty = 0.0;
  else if (r.hyp_length >= r.ref_length) r.brevity_penalty = 1.0;
  else r.brevity_penalty = std::exp(1.0 - static_cast<double>(r.ref_length) / static_cast<double>(r.hyp_length));
  if (zero || orders == 0) {
    r.bleu = 0.0;
  } else {
    const double mean = log_sum / static_cast<double>(orders);
    r.bleu = 100.0 * r.brevity_penalty * (mean == 0.0 ? 1.0 : std::exp(mean));
  }
  return r;
}

std::size_t levenshtein(const Words& hyp, const Words& ref) {
  auto [h, r] = to_ids(hyp, ref);
  return static_cast<std::size_t>(edit_path(h, r, nullptr));
}

TerEdits ter_edits(const Words& hyp, const Words& ref) {
  auto [h, r] = to_ids(hyp, ref);
  return TerSearch(r).run(h);
}

RatioResult ter(const std::vector<std::string>& hyps, const std::vector<std::string>& refs, bool case_sensitive) {
  check_corpus(hyps, refs);
  std::size_t edits = 0, words = 0;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    const Words f = tokenize(refs[s], case_sensitive);
    edits += ter_edits(tokenize(hyps[s], case_sensitive), f).total();
    words += f.size();
  }
  return ratio(edits, words);
}

RatioResult wer(const std::vector<std::string>& hyps, const std::vector<std::string>& refs, bool case_sensitive) {
  check_corpus(hyps, refs);
  std::size_t edits = 0, words = 0;
  for (std::size_t s = 0; s < hyps.size(); ++s) {
    const Words f = tokenize(refs[s], case_sensitive);
    edits += levenshtein(tokenize(hyps[s], case_sensitive), f);
    words += f.size();
  }
  return ratio(edits, words);
}

MetricReport score_corpus(const std::vector<std::string>& hyps, const std::vector<std::string>& refs,
                          bool case_sensitive, bool with_wer) {
  MetricReport m;
  m.sentences = hyps.size();
  m.bleu = bleu(hyps, refs, case_sensitive);
  m.ter = ter(hyps, refs, case_sensitive);
  if (with_wer) m.wer = wer(hyps, refs, case_sensitive);
  return m;
}

std::string MetricReport::to_json() const {
  nlohmann::ordered_json j;
  j["sentences"] = sentences;
  j["bleu"] = bleu.bleu;
  j["precisions"] = bleu.precisions;
  j["brevity_penalty"] = bleu.brevity_penalty;
  j["hyp_length"] = bleu.hyp_length;
  j["ref_length"] = bleu.ref_length;
  j["ter"] = ter.percent;
  if (wer) j["wer"] = wer->percent;
  return j.dump();
}

}  // namespace e2est
