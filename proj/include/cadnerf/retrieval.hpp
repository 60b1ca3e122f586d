#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "cadnerf/image.hpp"
#include "cadnerf/library.hpp"

namespace cadnerf {

inline constexpr int kCanonicalMaskSize = 64;

/// Crops to the foreground bounding box, scales the larger side to
/// `canonical` (aspect preserved, nearest sampling) and centers the result on
/// a canonical x canonical grid.
MaskRaster normalize_mask(const MaskRaster& mask, int canonical = kCanonicalMaskSize);

/// |a and b| / |a or b| on equally sized grids.
double mask_iou(const MaskRaster& a, const MaskRaster& b);

struct Candidate {
  int pose_index = 0;
  double iou = 0.0;
};

/// Per input view (in input order), candidates sorted by descending IoU.
struct CandidateTable {
  std::vector<std::vector<Candidate>> views;
};

struct Assignment {
  int view = 0;
  int pose_index = 0;
  double iou = 0.0;
};

struct RetrievalResult {
  std::string model_id;
  std::vector<Assignment> assignments;  // pose_index strictly increasing
  double total_score = 0.0;
  std::vector<int> discarded_views;
};

/// Library masks of one model normalized once for repeated scoring.
class NormalizedEntry {
 public:
  NormalizedEntry(const LibraryEntry& entry, int canonical = kCanonicalMaskSize);

  const LibraryEntry& entry() const { return *entry_; }
  int canonical() const { return canonical_; }
  std::size_t size() const { return bits_.size(); }
  /// IoU of a normalized query against library pose `index`.
  double iou(const std::vector<std::uint64_t>& query_bits, std::size_t index) const;

  static std::vector<std::uint64_t> pack(const MaskRaster& normalized);

 private:
  const LibraryEntry* entry_;
  int canonical_;
  std::vector<std::vector<std::uint64_t>> bits_;
  std::vector<int> counts_;
};

/// Top-k poses per view; ties broken by lower pose index.
CandidateTable rank_candidates(std::span<const MaskRaster> inputs, const NormalizedEntry& entry, int k,
                               int threads = 1);
CandidateTable rank_candidates(std::span<const MaskRaster> inputs, const LibraryEntry& entry, int k,
                               int threads = 1);

struct Ballot {
  std::string model_id;
  double iou = 0.0;
};

/// Majority vote; ties by higher summed IoU, then lexicographically smaller id.
std::string tally_votes(std::span<const Ballot> ballots);
/// Each view votes for the model holding its single best-IoU mask.
std::string vote_model(std::span<const MaskRaster> inputs, const Library& library, int threads = 1);

/// Order-constrained multi-view assignment maximizing summed IoU. Views may
/// be skipped; returns nullopt when no view can be assigned.
std::optional<RetrievalResult> backtrack_assign(const CandidateTable& table);

struct RetrievalOptions {
  int k = 10;
  int max_discard = 2;
  int canonical = kCanonicalMaskSize;
  int threads = 1;
};

RetrievalResult retrieve(std::span<const MaskRaster> inputs, const Library& library, const RetrievalOptions& options);

nlohmann::json retrieval_to_json(const RetrievalResult& result, const Library& library,
                                 const std::vector<std::string>& view_names = {});
RetrievalResult retrieval_from_json(const nlohmann::json& doc);

}  // namespace cadnerf
