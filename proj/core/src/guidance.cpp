#include "stylecore/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>

#include "stylecore/error.hpp"

namespace stylecore {

namespace {

std::string dims(int h, int w) { return std::to_string(w) + "x" + std::to_string(h); }

bool any_set(const ImageBuffer& mask) {
  return std::any_of(mask.storage().begin(), mask.storage().end(), [](double v) { return v > 0.0; });
}

void check_mask(const ImageBuffer& mask, int h, int w, const std::string& field) {
  if (mask.empty()) raise(ErrorKind::InvalidArgument, field + ": mask is missing");
  if (mask.height() != h || mask.width() != w) {
    raise(ErrorKind::InvalidArgument,
          field + ": expected " + dims(h, w) + ", got " + dims(mask.height(), mask.width()));
  }
  if (!any_set(mask)) raise(ErrorKind::InvalidArgument, field + ": mask is empty");
}

void check_point(const std::array<double, 2>& p, int h, int w, const std::string& field) {
  if (!(p[0] >= 0.0 && p[0] <= w - 1 && p[1] >= 0.0 && p[1] <= h - 1)) {
    raise(ErrorKind::InvalidArgument, field + ": point (" + std::to_string(p[0]) + ", " + std::to_string(p[1]) +
                                          ") lies outside the " + dims(h, w) + " image");
  }
}

// Grid cells covered by a mask after resampling it to the grid.
std::vector<unsigned char> mask_cells(const ImageBuffer& mask, int gh, int gw, bool keep_peak) {
  const ImageBuffer small = resize_bilinear(extract_channel(mask, 0), gh, gw);
  std::vector<unsigned char> cells(static_cast<std::size_t>(gh) * gw, 0);
  bool any = false;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (small.storage()[i] >= 0.5) {
      cells[i] = 1;
      any = true;
    }
  }
  if (!any && keep_peak) {
    // Region thinner than a cell: keep its strongest cell so the pair stays satisfiable.
    const auto& v = small.storage();
    const auto peak = std::max_element(v.begin(), v.end());
    if (*peak > 0.0) cells[static_cast<std::size_t>(peak - v.begin())] = 1;
  }
  return cells;
}

}  // namespace

void validate_guidance(const GuidanceSpec& g, int content_h, int content_w, int style_h, int style_w) {
  if (!(g.beta > 0.0) || !std::isfinite(g.beta)) raise(ErrorKind::InvalidArgument, "beta: must be positive");
  if (!(g.spacing >= 0.0) || !std::isfinite(g.spacing)) {
    raise(ErrorKind::InvalidArgument, "spacing: must be non-negative");
  }
  for (std::size_t k = 0; k < g.regions.size(); ++k) {
    const std::string base = "regions[" + std::to_string(k) + "]";
    check_mask(g.regions[k].content_mask, content_h, content_w, base + ".content_mask");
    check_mask(g.regions[k].style_mask, style_h, style_w, base + ".style_mask");
  }
  for (std::size_t k = 0; k < g.points.size(); ++k) {
    const std::string base = "points[" + std::to_string(k) + "]";
    check_point(g.points[k].content, content_h, content_w, base + ".content");
    check_point(g.points[k].style, style_h, style_w, base + ".style");
  }
}

std::vector<PointPair> expand_point_guidance(const std::vector<PointPair>& points, double spacing,
                                             int content_h, int content_w, int style_h, int style_w) {
  std::vector<PointPair> out;
  std::set<std::array<double, 4>> seen;
  auto clamp_to = [](double v, int size) { return std::clamp(v, 0.0, static_cast<double>(size - 1)); };
  for (const auto& p : points) {
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        PointPair q;
        q.content = {clamp_to(p.content[0] + dx * spacing, content_w), clamp_to(p.content[1] + dy * spacing, content_h)};
        q.style = {clamp_to(p.style[0] + dx * spacing, style_w), clamp_to(p.style[1] + dy * spacing, style_h)};
        if (seen.insert({q.content[0], q.content[1], q.style[0], q.style[1]}).second) out.push_back(q);
      }
    }
  }
  return out;
}

int GridFrame::cell_of(double x, double y) const {
  const int row = std::clamp(static_cast<int>(std::floor(y * grid_h / image_h)), 0, grid_h - 1);
  const int col = std::clamp(static_cast<int>(std::floor(x * grid_w / image_w)), 0, grid_w - 1);
  return row * grid_w + col;
}

GridGuidance::GridGuidance(const GuidanceSpec& g, const GridFrame& out, const GridFrame& style)
    : beta_(g.beta), out_cells_(out.grid_h * out.grid_w), style_cells_(style.grid_h * style.grid_w) {
  for (const auto& r : g.regions) {
    auto o = mask_cells(r.content_mask, out.grid_h, out.grid_w, false);
    if (std::none_of(o.begin(), o.end(), [](unsigned char v) { return v != 0; })) continue;
    auto s = mask_cells(r.style_mask, style.grid_h, style.grid_w, true);
    out_regions_.push_back(std::move(o));
    style_regions_.push_back(std::move(s));
  }
  const auto expanded =
      expand_point_guidance(g.points, g.spacing, out.image_h, out.image_w, style.image_h, style.image_w);
  // Clicks sharing an output cell merge into one region so they do not forbid each other.
  std::map<int, std::set<int>> by_cell;
  for (const auto& p : expanded) {
    by_cell[out.cell_of(p.content[0], p.content[1])].insert(style.cell_of(p.style[0], p.style[1]));
  }
  for (const auto& [cell, targets] : by_cell) {
    std::vector<unsigned char> o(static_cast<std::size_t>(out_cells_), 0);
    std::vector<unsigned char> s(static_cast<std::size_t>(style_cells_), 0);
    o[static_cast<std::size_t>(cell)] = 1;
    for (int t : targets) s[static_cast<std::size_t>(t)] = 1;
    point_regions_.push_back(static_cast<int>(out_regions_.size()));
    out_regions_.push_back(std::move(o));
    style_regions_.push_back(std::move(s));
  }
}

std::vector<int> GridGuidance::required_out_cells() const {
  std::vector<int> cells;
  for (int k : point_regions_) {
    const auto& o = out_regions_[static_cast<std::size_t>(k)];
    for (int c = 0; c < out_cells_; ++c) {
      if (o[static_cast<std::size_t>(c)]) cells.push_back(c);
    }
  }
  return cells;
}

std::vector<int> GridGuidance::required_style_cells(const std::vector<int>& style_samples) const {
  constexpr int kPerRegion = 16;
  std::vector<int> cells;
  for (std::size_t k = 0; k < style_regions_.size(); ++k) {
    const auto& s = style_regions_[k];
    const bool is_point = std::find(point_regions_.begin(), point_regions_.end(), static_cast<int>(k)) !=
                          point_regions_.end();
    std::vector<int> members;
    for (int c = 0; c < style_cells_; ++c) {
      if (s[static_cast<std::size_t>(c)]) members.push_back(c);
    }
    if (is_point) {
      cells.insert(cells.end(), members.begin(), members.end());
      continue;
    }
    const bool covered = std::any_of(style_samples.begin(), style_samples.end(),
                                     [&](int c) { return s[static_cast<std::size_t>(c)] != 0; });
    if (covered || members.empty()) continue;
    const std::size_t take = std::min<std::size_t>(kPerRegion, members.size());
    for (std::size_t t = 0; t < take; ++t) cells.push_back(members[t * members.size() / take]);
  }
  return cells;
}

RegionMembership GridGuidance::membership(const std::vector<int>& out_samples,
                                          const std::vector<int>& style_samples) const {
  RegionMembership m;
  for (std::size_t k = 0; k < out_regions_.size(); ++k) {
    std::vector<unsigned char> rows(out_samples.size());
    std::vector<unsigned char> cols(style_samples.size());
    for (std::size_t i = 0; i < out_samples.size(); ++i) {
      rows[i] = out_regions_[k][static_cast<std::size_t>(out_samples[i])];
    }
    for (std::size_t j = 0; j < style_samples.size(); ++j) {
      cols[j] = style_regions_[k][static_cast<std::size_t>(style_samples[j])];
    }
    // A region whose style side was not sampled cannot constrain this step.
    if (std::none_of(cols.begin(), cols.end(), [](unsigned char v) { return v != 0; })) continue;
    m.rows.push_back(std::move(rows));
    m.cols.push_back(std::move(cols));
  }
  return m;
}

std::vector<int> append_unique(std::vector<int> cells, const std::vector<int>& extra) {
  std::set<int> present(cells.begin(), cells.end());
  for (int c : extra) {
    if (present.insert(c).second) cells.push_back(c);
  }
  return cells;
}

}  // namespace stylecore
