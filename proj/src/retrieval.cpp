#include "cadnerf/retrieval.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>

#include "cadnerf/errors.hpp"
#include "cadnerf/parallel.hpp"

namespace cadnerf {

MaskRaster normalize_mask(const MaskRaster& mask, int canonical) {
  const BBox box = mask.bbox();
  if (!box.valid) fail(ErrorKind::EmptySilhouette, "cannot normalize an empty silhouette");
  const int w = box.width(), h = box.height();
  const double scale = static_cast<double>(canonical) / std::max(w, h);
  const int out_w = std::clamp(static_cast<int>(std::lround(w * scale)), 1, canonical);
  const int out_h = std::clamp(static_cast<int>(std::lround(h * scale)), 1, canonical);
  const int off_x = (canonical - out_w) / 2;
  const int off_y = (canonical - out_h) / 2;
  MaskRaster out(canonical, canonical);
  out.normalized = true;
  for (int y = 0; y < out_h; ++y) {
    const int sy = std::min(box.y1, box.y0 + static_cast<int>(std::floor((y + 0.5) / scale)));
    for (int x = 0; x < out_w; ++x) {
      const int sx = std::min(box.x1, box.x0 + static_cast<int>(std::floor((x + 0.5) / scale)));
      out.at(off_x + x, off_y + y) = mask.at(sx, sy);
    }
  }
  return out;
}

double mask_iou(const MaskRaster& a, const MaskRaster& b) {
  if (a.width != b.width || a.height != b.height) {
    fail(ErrorKind::Dimension, "mask grids differ: " + std::to_string(a.width) + "x" + std::to_string(a.height) +
                                   " vs " + std::to_string(b.width) + "x" + std::to_string(b.height));
  }
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.pixels.size(); ++i) {
    inter += a.pixels[i] & b.pixels[i];
    uni += a.pixels[i] | b.pixels[i];
  }
  if (uni == 0) fail(ErrorKind::EmptySilhouette, "IoU of two empty masks is undefined");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::uint64_t> NormalizedEntry::pack(const MaskRaster& m) {
  std::vector<std::uint64_t> bits((m.pixels.size() + 63) / 64, 0);
  for (std::size_t i = 0; i < m.pixels.size(); ++i) {
    if (m.pixels[i]) bits[i / 64] |= std::uint64_t{1} << (i % 64);
  }
  return bits;
}

NormalizedEntry::NormalizedEntry(const LibraryEntry& entry, int canonical) : entry_(&entry), canonical_(canonical) {
  for (const auto& m : entry.masks) {
    bits_.push_back(pack(normalize_mask(m, canonical)));
    int c = 0;
    for (auto word : bits_.back()) c += std::popcount(word);
    counts_.push_back(c);
  }
}

double NormalizedEntry::iou(const std::vector<std::uint64_t>& q, std::size_t index) const {
  const auto& lib = bits_[index];
  int inter = 0, uni = 0;
  for (std::size_t i = 0; i < lib.size(); ++i) {
    inter += std::popcount(q[i] & lib[i]);
    uni += std::popcount(q[i] | lib[i]);
  }
  return static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

std::vector<std::vector<std::uint64_t>> pack_inputs(std::span<const MaskRaster> inputs, int canonical) {
  std::vector<std::vector<std::uint64_t>> packed;
  for (std::size_t v = 0; v < inputs.size(); ++v) {
    try {
      packed.push_back(NormalizedEntry::pack(normalize_mask(inputs[v], canonical)));
    } catch (const Error& e) {
      fail(e.kind(), "view " + std::to_string(v) + ": " + e.what());
    }
  }
  return packed;
}

bool better(const Candidate& a, const Candidate& b) {
  if (a.iou != b.iou) return a.iou > b.iou;
  return a.pose_index < b.pose_index;
}

}  // namespace

CandidateTable rank_candidates(std::span<const MaskRaster> inputs, const NormalizedEntry& entry, int k, int threads) {
  if (k < 1) fail(ErrorKind::InvalidInput, "k must be >= 1");
  const auto packed = pack_inputs(inputs, entry.canonical());
  CandidateTable table;
  table.views.resize(inputs.size());
  parallel_for(inputs.size(), threads, [&](std::size_t v) {
    std::vector<Candidate> all(entry.size());
    for (std::size_t i = 0; i < entry.size(); ++i) all[i] = {static_cast<int>(i), entry.iou(packed[v], i)};
    const std::size_t keep = std::min<std::size_t>(k, all.size());
    std::partial_sort(all.begin(), all.begin() + keep, all.end(), better);
    all.resize(keep);
    table.views[v] = std::move(all);
  });
  return table;
}

CandidateTable rank_candidates(std::span<const MaskRaster> inputs, const LibraryEntry& entry, int k, int threads) {
  return rank_candidates(inputs, NormalizedEntry(entry), k, threads);
}

std::string tally_votes(std::span<const Ballot> ballots) {
  if (ballots.empty()) fail(ErrorKind::InvalidInput, "no ballots to tally");
  struct Tally {
    int votes = 0;
    double score = 0.0;
  };
  std::map<std::string, Tally> tally;  // ordered: lexicographic tie-break
  for (const auto& b : ballots) {
    tally[b.model_id].votes += 1;
    tally[b.model_id].score += b.iou;
  }
  auto best = tally.begin();
  for (auto it = std::next(tally.begin()); it != tally.end(); ++it) {
    const auto& [v, s] = it->second;
    if (v > best->second.votes || (v == best->second.votes && s > best->second.score)) best = it;
  }
  return best->first;
}

std::string vote_model(std::span<const MaskRaster> inputs, const Library& library, int threads) {
  if (inputs.empty()) fail(ErrorKind::InvalidInput, "need at least one input view");
  if (library.entries.empty()) fail(ErrorKind::InvalidInput, "library is empty");
  std::vector<NormalizedEntry> normalized;
  for (const auto& e : library.entries) normalized.emplace_back(e);
  const auto packed = pack_inputs(inputs, kCanonicalMaskSize);
  std::vector<Ballot> ballots(inputs.size());
  parallel_for(inputs.size(), threads, [&](std::size_t v) {
    Ballot best{"", -1.0};
    for (const auto& ne : normalized) {
      for (std::size_t i = 0; i < ne.size(); ++i) {
        const double iou = ne.iou(packed[v], i);
        const auto& id = ne.entry().model_id;
        if (iou > best.iou || (iou == best.iou && id < best.model_id)) best = {id, iou};
      }
    }
    ballots[v] = best;
  });
  return tally_votes(ballots);
}

namespace {

struct Search {
  const CandidateTable& table;
  std::vector<Assignment> current;
  std::vector<Assignment> best;
  double best_score = 0.0;
  std::vector<double> bound;  // bound[v]: sum of the best IoU of views v..end

  void recurse(std::size_t view, double score) {
    if (!best.empty() && score + bound[view] + 1e-9 < best_score) return;  // margin absorbs rounding
    if (view == table.views.size()) {
      if (score > best_score) {
        best = current;
        best_score = score;
      }
      return;
    }
    for (const auto& c : table.views[view]) {
      if (current.empty() || c.pose_index > current.back().pose_index) {
        current.push_back({static_cast<int>(view), c.pose_index, c.iou});
        recurse(view + 1, score + c.iou);
        current.pop_back();
      }
    }
    recurse(view + 1, score);  // skip this view
  }
};

}  // namespace

std::optional<RetrievalResult> backtrack_assign(const CandidateTable& table) {
  if (table.views.empty()) fail(ErrorKind::InvalidInput, "candidate table is empty");
  Search search{table, {}, {}, 0.0, std::vector<double>(table.views.size() + 1, 0.0)};
  for (std::size_t v = table.views.size(); v-- > 0;) {
    double top = 0.0;
    for (const auto& c : table.views[v]) top = std::max(top, c.iou);
    search.bound[v] = search.bound[v + 1] + top;
  }
  search.recurse(0, 0.0);
  if (search.best.empty()) return std::nullopt;
  RetrievalResult result;
  result.assignments = std::move(search.best);
  result.total_score = search.best_score;
  std::size_t next = 0;
  for (int v = 0; v < static_cast<int>(table.views.size()); ++v) {
    if (next < result.assignments.size() && result.assignments[next].view == v) {
      ++next;
    } else {
      result.discarded_views.push_back(v);
    }
  }
  return result;
}

RetrievalResult retrieve(std::span<const MaskRaster> inputs, const Library& library, const RetrievalOptions& options) {
  if (options.max_discard < 0 || options.max_discard > 2) {
    fail(ErrorKind::InvalidInput, "max_discard must be 0, 1 or 2");
  }
  const std::string model = vote_model(inputs, library, options.threads);
  const NormalizedEntry entry(library.entry(model), options.canonical);
  const CandidateTable table = rank_candidates(inputs, entry, options.k, options.threads);
  auto result = backtrack_assign(table);
  if (!result) fail(ErrorKind::Infeasible, "no order-respecting pose assignment exists");
  result->model_id = model;
  if (static_cast<int>(result->discarded_views.size()) > options.max_discard) {
    std::string views;
    for (int v : result->discarded_views) views += (views.empty() ? "" : ",") + std::to_string(v);
    fail(ErrorKind::TooManyDiscards, std::to_string(result->discarded_views.size()) +
                                         " views conflict with the pose order (max " +
                                         std::to_string(options.max_discard) + "): " + views);
  }
  return *result;
}

nlohmann::json retrieval_to_json(const RetrievalResult& result, const Library& library,
                                 const std::vector<std::string>& view_names) {
  const auto& entry = library.entry(result.model_id);
  auto name = [&](int v) { return v < static_cast<int>(view_names.size()) ? view_names[v] : std::to_string(v); };
  nlohmann::json doc;
  doc["model_id"] = result.model_id;
  doc["total_score"] = result.total_score;
  doc["views"] = nlohmann::json::array();
  for (const auto& a : result.assignments) {
    const auto m = entry.poses.at(a.pose_index).camera_to_world();
    std::vector<double> flat;
    for (int r = 0; r < 4; ++r)
      for (int c = 0; c < 4; ++c) flat.push_back(m(r, c));
    doc["views"].push_back(
        {{"view", name(a.view)}, {"view_index", a.view}, {"pose_index", a.pose_index}, {"iou", a.iou},
         {"camera_to_world", flat}});
  }
  doc["discarded"] = nlohmann::json::array();
  for (int v : result.discarded_views) doc["discarded"].push_back(name(v));
  doc["discarded_indices"] = result.discarded_views;
  return doc;
}

RetrievalResult retrieval_from_json(const nlohmann::json& doc) {
  RetrievalResult r;
  try {
    r.model_id = doc.at("model_id").get<std::string>();
    r.total_score = doc.at("total_score").get<double>();
    for (const auto& v : doc.at("views")) {
      r.assignments.push_back({v.at("view_index").get<int>(), v.at("pose_index").get<int>(), v.at("iou").get<double>()});
    }
    r.discarded_views = doc.at("discarded_indices").get<std::vector<int>>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Format, std::string("retrieval JSON: ") + e.what());
  }
  return r;
}

}  // namespace cadnerf
