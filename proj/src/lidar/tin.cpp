#include "canopy/lidar/tin.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace canopy::lidar {

namespace {

using i64 = std::int64_t;
using i128 = __int128;

constexpr i64 kLattice = i64{1} << 20;
constexpr i64 kSuper = i64{1} << 27;

struct Site {
  i64 x, y;
};

i128 orient(const Site& a, const Site& b, const Site& c) {
  return static_cast<i128>(b.x - a.x) * (c.y - a.y) - static_cast<i128>(b.y - a.y) * (c.x - a.x);
}

// > 0 when d lies strictly inside the circumcircle of CCW triangle abc.
i128 incircle(const Site& a, const Site& b, const Site& c, const Site& d) {
  const i128 adx = a.x - d.x, ady = a.y - d.y;
  const i128 bdx = b.x - d.x, bdy = b.y - d.y;
  const i128 cdx = c.x - d.x, cdy = c.y - d.y;
  const i128 alift = adx * adx + ady * ady;
  const i128 blift = bdx * bdx + bdy * bdy;
  const i128 clift = cdx * cdx + cdy * cdy;
  return alift * (bdx * cdy - cdx * bdy) + blift * (cdx * ady - adx * cdy) +
         clift * (adx * bdy - bdx * ady);
}

// Hilbert curve index of (x, y) on a 2^16 grid; used for insertion order.
std::uint64_t hilbert(std::uint32_t x, std::uint32_t y) {
  constexpr std::uint32_t n = 1u << 16;
  std::uint64_t d = 0;
  for (std::uint32_t s = n / 2; s > 0; s /= 2) {
    const std::uint32_t rx = (x & s) ? 1 : 0;
    const std::uint32_t ry = (y & s) ? 1 : 0;
    d += static_cast<std::uint64_t>(s) * s * ((3 * rx) ^ ry);
    if (ry == 0) {
      if (rx == 1) {
        x = n - 1 - x;
        y = n - 1 - y;
      }
      std::swap(x, y);
    }
  }
  return d;
}

struct Tri {
  std::uint32_t v[3];
  std::int32_t n[3];  // neighbour opposite v[i], -1 on the hull
  bool alive;
};

class Builder {
 public:
  explicit Builder(std::vector<Site> sites) : sites_(std::move(sites)) {
    const auto s = static_cast<std::uint32_t>(sites_.size());
    super_ = s;
    sites_.push_back({-kSuper, -kSuper});
    sites_.push_back({2 * kSuper, -kSuper});
    sites_.push_back({-kSuper, 2 * kSuper});
    tris_.push_back({{s, s + 1, s + 2}, {-1, -1, -1}, true});
  }

  void insert(std::uint32_t p) {
    const std::int32_t start = locate(sites_[p]);
    cavity_.clear();
    stack_.clear();
    stack_.push_back(start);
    in_cavity_.resize(tris_.size(), 0);
    in_cavity_[start] = 1;
    while (!stack_.empty()) {
      const std::int32_t t = stack_.back();
      stack_.pop_back();
      cavity_.push_back(t);
      for (int i = 0; i < 3; ++i) {
        const std::int32_t nb = tris_[t].n[i];
        if (nb < 0 || in_cavity_[nb]) continue;
        const Tri& q = tris_[nb];
        if (incircle(sites_[q.v[0]], sites_[q.v[1]], sites_[q.v[2]], sites_[p]) > 0) {
          in_cavity_[nb] = 1;
          stack_.push_back(nb);
        }
      }
    }

    // Boundary edges (a, b) in CCW order with the triangle outside them.
    boundary_.clear();
    for (std::int32_t t : cavity_) {
      for (int i = 0; i < 3; ++i) {
        const std::int32_t nb = tris_[t].n[i];
        if (nb >= 0 && in_cavity_[nb]) continue;
        boundary_.push_back({tris_[t].v[(i + 1) % 3], tris_[t].v[(i + 2) % 3], nb, -1});
      }
    }
    for (std::int32_t t : cavity_) {
      in_cavity_[t] = 0;
      tris_[t].alive = false;
      free_.push_back(t);
    }

    for (Edge& e : boundary_) {
      std::int32_t id;
      if (!free_.empty()) {
        id = free_.back();
        free_.pop_back();
      } else {
        id = static_cast<std::int32_t>(tris_.size());
        tris_.push_back({});
        in_cavity_.push_back(0);
      }
      e.tri = id;
      tris_[id] = {{e.a, e.b, p}, {-1, -1, e.outside}, true};
      if (e.outside >= 0) {
        Tri& o = tris_[e.outside];
        for (int i = 0; i < 3; ++i) {
          if (o.v[(i + 1) % 3] == e.b && o.v[(i + 2) % 3] == e.a) o.n[i] = id;
        }
      }
    }
    // Triangle (a, b, p): opposite a is edge (b, p), shared with the
    // triangle whose boundary edge starts at b; opposite b is edge (p, a),
    // shared with the triangle whose boundary edge ends at a.
    for (const Edge& e : boundary_) {
      for (const Edge& f : boundary_) {
        if (f.a == e.b) tris_[e.tri].n[0] = f.tri;
        if (f.b == e.a) tris_[e.tri].n[1] = f.tri;
      }
    }
    last_ = boundary_.front().tri;
  }

  std::vector<Tin::Triangle> finish(const std::vector<std::uint32_t>& original) const {
    std::vector<Tin::Triangle> out;
    for (const Tri& t : tris_) {
      if (!t.alive || t.v[0] >= super_ || t.v[1] >= super_ || t.v[2] >= super_) continue;
      out.push_back({original[t.v[0]], original[t.v[1]], original[t.v[2]]});
    }
    return out;
  }

 private:
  struct Edge {
    std::uint32_t a, b;
    std::int32_t outside;
    std::int32_t tri;
  };

  // Visibility walk from the most recently created triangle.
  std::int32_t locate(const Site& p) const {
    std::int32_t t = last_;
    for (;;) {
      const Tri& tri = tris_[t];
      std::int32_t next = -1;
      for (int i = 0; i < 3; ++i) {
        const Site& a = sites_[tri.v[(i + 1) % 3]];
        const Site& b = sites_[tri.v[(i + 2) % 3]];
        if (orient(a, b, p) < 0) {
          next = tri.n[i];
          break;
        }
      }
      if (next < 0) return t;
      t = next;
    }
  }

  std::vector<Site> sites_;
  std::uint32_t super_ = 0;
  std::vector<Tri> tris_;
  std::vector<std::int32_t> free_;
  std::vector<std::int32_t> cavity_;
  std::vector<std::int32_t> stack_;
  std::vector<char> in_cavity_;
  std::vector<Edge> boundary_;
  std::int32_t last_ = 0;
};

}  // namespace

Tin::Tin(std::span<const Point> points) {
  if (points.empty()) return;
  double min_x = points[0].x, max_x = points[0].x, min_y = points[0].y, max_y = points[0].y;
  for (const Point& p : points) {
    min_x = std::min(min_x, p.x);
    max_x = std::max(max_x, p.x);
    min_y = std::min(min_y, p.y);
    max_y = std::max(max_y, p.y);
  }
  const double extent = std::max({max_x - min_x, max_y - min_y, 1e-9});
  const double scale = static_cast<double>(kLattice) / extent;

  struct Keyed {
    i64 x, y;
    std::uint64_t order;
    std::uint32_t index;
  };
  std::vector<Keyed> keyed(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    const i64 qx = std::llround((points[i].x - min_x) * scale);
    const i64 qy = std::llround((points[i].y - min_y) * scale);
    keyed[i] = {qx, qy, hilbert(static_cast<std::uint32_t>(std::min<i64>(qx >> 4, 65535)),
                        static_cast<std::uint32_t>(std::min<i64>(qy >> 4, 65535))),
                static_cast<std::uint32_t>(i)};
  }
  // Merge duplicate lattice nodes, keeping the highest return.
  std::sort(keyed.begin(), keyed.end(), [&](const Keyed& a, const Keyed& b) {
    if (a.x != b.x) return a.x < b.x;
    if (a.y != b.y) return a.y < b.y;
    if (points[a.index].z != points[b.index].z) return points[a.index].z > points[b.index].z;
    return a.index < b.index;
  });
  keyed.erase(std::unique(keyed.begin(), keyed.end(),
                          [](const Keyed& a, const Keyed& b) { return a.x == b.x && a.y == b.y; }),
              keyed.end());
  std::stable_sort(keyed.begin(), keyed.end(),
                   [](const Keyed& a, const Keyed& b) { return a.order < b.order; });
  site_count_ = keyed.size();

  std::vector<Site> sites(keyed.size());
  std::vector<std::uint32_t> original(keyed.size());
  for (std::size_t i = 0; i < keyed.size(); ++i) {
    sites[i] = {keyed[i].x, keyed[i].y};
    original[i] = keyed[i].index;
  }
  Builder builder(std::move(sites));
  for (std::uint32_t i = 0; i < keyed.size(); ++i) builder.insert(i);
  triangles_ = builder.finish(original);
}

}  // namespace canopy::lidar
