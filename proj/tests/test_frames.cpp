#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "startrack/frames.hpp"

using namespace startrack;

namespace {

EventImage blank(int w, int h) {
  EventImage img;
  img.width = w;
  img.height = h;
  img.counts.assign(static_cast<std::size_t>(w) * h, 0);
  return img;
}

void set(EventImage& img, int x, int y, std::uint32_t v) { img.counts[static_cast<std::size_t>(y) * img.width + x] = v; }

/// Direct 3x3 convolution with zero padding.
double box_oracle(const EventImage& img, int x, int y) {
  double s = 0.0;
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      const int nx = x + dx;
      const int ny = y + dy;
      if (nx >= 0 && ny >= 0 && nx < img.width && ny < img.height) s += img.at(nx, ny);
    }
  }
  return s / 9.0;
}

/// Flood-fill component count over the thresholded image, 8-connectivity.
std::size_t component_oracle(const FilteredImage& f, double eps1) {
  std::set<std::pair<int, int>> active;
  for (int y = 0; y < f.height; ++y) {
    for (int x = 0; x < f.width; ++x) {
      if (f.at(x, y) >= eps1) active.insert({x, y});
    }
  }
  std::size_t n = 0;
  while (!active.empty()) {
    ++n;
    std::vector<std::pair<int, int>> queue{*active.begin()};
    active.erase(active.begin());
    while (!queue.empty()) {
      const auto [x, y] = queue.back();
      queue.pop_back();
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          auto it = active.find({x + dx, y + dy});
          if (it != active.end()) {
            queue.push_back(*it);
            active.erase(it);
          }
        }
      }
    }
  }
  return n;
}

std::vector<Event> random_events(std::mt19937_64& rng, std::size_t n, int w, int h, std::int64_t t_end) {
  std::uniform_int_distribution<int> ux(0, w - 1);
  std::uniform_int_distribution<int> uy(0, h - 1);
  std::uniform_int_distribution<std::int64_t> ut(0, t_end - 1);
  std::vector<Event> ev(n);
  for (auto& e : ev) {
    e.t_us = ut(rng);
    e.x = static_cast<std::uint16_t>(ux(rng));
    e.y = static_cast<std::uint16_t>(uy(rng));
    e.positive = (rng() & 1) != 0;
  }
  std::sort(ev.begin(), ev.end(), event_less);
  return ev;
}

const Intrinsics kCam = Intrinsics::from_fov(20.0, 240, 180);

}  // namespace

TEST(BuildEventImages, FullSequenceHas1125Images) {
  const auto seq = build_event_images({}, 240, 180, 0, 45000000, 40.0);
  EXPECT_EQ(seq.images.size(), 1125u);
  EXPECT_FALSE(seq.dropped_partial_window);
}

TEST(BuildEventImages, EmptyStreamGivesZeroImages) {
  const auto seq = build_event_images({}, 24, 18, 0, 400000, 40.0);
  ASSERT_EQ(seq.images.size(), 10u);
  for (const auto& img : seq.images) {
    EXPECT_TRUE(std::all_of(img.counts.begin(), img.counts.end(), [](auto c) { return c == 0; }));
  }
}

TEST(BuildEventImages, DistinctTimestampsCountSeparately) {
  const std::vector<Event> ev{{100, 3, 4, true}, {250, 3, 4, false}};
  const auto seq = build_event_images(ev, 10, 10, 0, 40000, 40.0);
  EXPECT_EQ(seq.images[0].at(3, 4), 2u);
}

TEST(BuildEventImages, RepeatedTimestampCountsOnce) {
  const std::vector<Event> ev{{100, 3, 4, true}, {100, 3, 4, false}, {100, 5, 4, true}};
  const auto seq = build_event_images(ev, 10, 10, 0, 40000, 40.0);
  EXPECT_EQ(seq.images[0].at(3, 4), 1u);
  EXPECT_EQ(seq.images[0].at(5, 4), 1u);
}

TEST(BuildEventImages, HalfOpenBoundary) {
  const std::vector<Event> ev{{39999, 1, 1, true}, {40000, 1, 1, true}, {80000, 1, 1, true}};
  const auto seq = build_event_images(ev, 4, 4, 0, 80000, 40.0);
  ASSERT_EQ(seq.images.size(), 2u);
  EXPECT_EQ(seq.images[0].at(1, 1), 1u);
  EXPECT_EQ(seq.images[1].at(1, 1), 1u);
  EXPECT_EQ(seq.images[0].t_end_us, seq.images[1].t_start_us);
}

TEST(BuildEventImages, PartialWindowDroppedAndFlagged) {
  const std::vector<Event> ev{{10, 0, 0, true}, {95000, 0, 0, true}};
  const auto seq = build_event_images(ev, 4, 4, 0, 100000, 40.0);
  EXPECT_EQ(seq.images.size(), 2u);
  EXPECT_TRUE(seq.dropped_partial_window);
}

TEST(BuildEventImages, RejectsUnsortedOrOutOfRange) {
  EXPECT_THROW(build_event_images(std::vector<Event>{{5, 0, 0, true}, {4, 0, 0, true}}, 4, 4, 0, 40000, 40.0), Error);
  EXPECT_THROW(build_event_images(std::vector<Event>{{5, 9, 0, true}}, 4, 4, 0, 40000, 40.0), Error);
}

TEST(BuildEventImagesProperty, CountsSumToCoveredEvents) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    auto ev = random_events(rng, 3000, 20, 15, 1000000);
    // Deduplicate (pixel, timestamp) so every event is individually countable.
    ev.erase(std::unique(ev.begin(), ev.end(),
                         [](const Event& a, const Event& b) { return a.t_us == b.t_us && a.x == b.x && a.y == b.y; }),
             ev.end());
    const double ms = 30.0 + trial;
    const auto seq = build_event_images(ev, 20, 15, 0, 1000000, ms);
    const std::int64_t covered = static_cast<std::int64_t>(seq.images.size()) * std::llround(ms * 1e3);
    const auto expected = std::count_if(ev.begin(), ev.end(), [&](const Event& e) { return e.t_us < covered; });
    std::uint64_t total = 0;
    for (const auto& img : seq.images) {
      for (auto c : img.counts) total += c;
    }
    EXPECT_EQ(total, static_cast<std::uint64_t>(expected));
  }
}

TEST(MeanFilter, ZeroImage) {
  const auto f = mean_filter(blank(8, 6));
  EXPECT_TRUE(std::all_of(f.values.begin(), f.values.end(), [](double v) { return v == 0.0; }));
}

TEST(MeanFilter, InteriorImpulse) {
  EventImage img = blank(9, 9);
  set(img, 4, 4, 9);
  const auto f = mean_filter(img);
  for (int y = 0; y < 9; ++y) {
    for (int x = 0; x < 9; ++x) {
      const bool inside = std::abs(x - 4) <= 1 && std::abs(y - 4) <= 1;
      EXPECT_EQ(f.at(x, y), inside ? 1.0 : 0.0);
    }
  }
}

TEST(MeanFilter, CornerUsesZeroPadding) {
  EventImage img = blank(5, 5);
  set(img, 0, 0, 9);
  const auto f = mean_filter(img);
  EXPECT_EQ(f.at(0, 0), 1.0);
  EXPECT_EQ(f.at(0, 0), box_oracle(img, 0, 0));
  EXPECT_EQ(f.at(2, 2), 0.0);
}

TEST(MeanFilterProperty, MatchesDirectConvolution) {
  std::mt19937_64 rng(32);
  std::uniform_int_distribution<std::uint32_t> val(0, 7);
  for (int trial = 0; trial < 30; ++trial) {
    EventImage img = blank(11 + trial % 5, 7 + trial % 3);
    for (auto& c : img.counts) c = val(rng) > 4 ? val(rng) : 0;
    const auto f = mean_filter(img);
    for (int y = 0; y < img.height; ++y) {
      for (int x = 0; x < img.width; ++x) EXPECT_NEAR(f.at(x, y), box_oracle(img, x, y), 1e-12);
    }
  }
}

TEST(Apc, ZeroImage) { EXPECT_EQ(apc(mean_filter(blank(10, 10)), 2.0), 0u); }

namespace {

/// Ten impulses of 18 on the top row, six columns apart: each clipped 3x2
/// patch filters to exactly 2, giving sixty active pixels.
EventImage sixty_active() {
  EventImage img = blank(100, 20);
  for (int i = 0; i < 10; ++i) set(img, 2 + 6 * i, 0, 18);
  return img;
}

}  // namespace

TEST(Apc, ConstructedSixtyActivePixels) {
  const EventImage img = sixty_active();
  std::size_t oracle = 0;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) oracle += box_oracle(img, x, y) >= 2.0 ? 1 : 0;
  }
  ASSERT_EQ(oracle, 60u);
  EXPECT_EQ(apc(mean_filter(img), 2.0), 60u);
}

TEST(SelectFrames, AllZeroSequenceSelectsNothing) {
  const std::vector<EventImage> images(5, blank(20, 20));
  EXPECT_TRUE(select_frames(images, 2.0, 50.0).empty());
}

TEST(SelectFrames, SixtyActivePixelsPassesDefaultThreshold) {
  const std::vector<EventImage> seq{blank(100, 20), sixty_active(), blank(100, 20), sixty_active()};
  EXPECT_EQ(select_frames(seq, 2.0, 50.0), (std::vector<std::size_t>{1, 3}));
  EXPECT_EQ(select_frames(seq, 2.0, 60.0), (std::vector<std::size_t>{1, 3}));
  EXPECT_TRUE(select_frames(seq, 2.0, 61.0).empty());
}

TEST(SelectFramesProperty, RaisingEps2NeverGrowsSelection) {
  std::mt19937_64 rng(33);
  std::uniform_int_distribution<std::uint32_t> val(0, 30);
  std::vector<EventImage> images;
  for (int i = 0; i < 40; ++i) {
    EventImage img = blank(30, 20);
    for (auto& c : img.counts) c = val(rng) > 26 ? val(rng) : 0;
    images.push_back(img);
  }
  std::vector<std::size_t> prev = select_frames(images, 2.0, 0.0);
  EXPECT_EQ(prev.size(), images.size());
  for (double eps2 = 5.0; eps2 <= 200.0; eps2 += 5.0) {
    const auto cur = select_frames(images, 2.0, eps2);
    EXPECT_TRUE(std::includes(prev.begin(), prev.end(), cur.begin(), cur.end()));
    EXPECT_TRUE(std::is_sorted(cur.begin(), cur.end()));
    prev = cur;
  }
}

TEST(ApcProperty, MonotoneInEps1) {
  std::mt19937_64 rng(34);
  std::uniform_int_distribution<std::uint32_t> val(0, 30);
  EventImage img = blank(40, 30);
  for (auto& c : img.counts) c = val(rng) > 20 ? val(rng) : 0;
  const auto f = mean_filter(img);
  std::size_t prev = apc(f, 0.01);
  for (double e = 0.5; e < 20.0; e += 0.5) {
    const std::size_t cur = apc(f, e);
    EXPECT_LE(cur, prev);
    prev = cur;
  }
}

TEST(ExtractPoints, ZeroImageGivesNoPoints) {
  EXPECT_TRUE(extract_points(mean_filter(blank(20, 20)), 2.0, kCam).empty());
}

TEST(ExtractPoints, SymmetricBlobCentroid) {
  EventImage img = blank(100, 80);
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) set(img, 50 + dx, 40 + dy, (dx == 0 && dy == 0) ? 9 : 5);
  }
  const auto ps = extract_points(mean_filter(img), 2.0, kCam);
  ASSERT_EQ(ps.size(), 1u);
  EXPECT_NEAR(ps.points[0].pixel.x(), 50.0, 1e-12);
  EXPECT_NEAR(ps.points[0].pixel.y(), 40.0, 1e-12);
  EXPECT_LE(ps.points[0].ray.angle_to(backproject(Vec2(50, 40), kCam)), 1e-12);
}

TEST(ExtractPoints, TwoSeparatedBlobs) {
  EventImage img = blank(60, 40);
  for (int dy = -1; dy <= 1; ++dy) {
    for (int dx = -1; dx <= 1; ++dx) {
      set(img, 15 + dx, 20 + dy, 9);
      set(img, 40 + dx, 20 + dy, 9);
    }
  }
  const auto f = mean_filter(img);
  const auto ps = extract_points(f, 2.0, kCam);
  EXPECT_EQ(ps.size(), 2u);
  EXPECT_EQ(ps.size(), component_oracle(f, 2.0));
}

TEST(ExtractPoints, PixelModeReturnsEveryActivePixel) {
  EventImage img = blank(30, 30);
  set(img, 10, 10, 27);
  const auto f = mean_filter(img);
  const auto ps = extract_points(f, 2.0, kCam, PointMode::kPixels, 7);
  EXPECT_EQ(ps.size(), apc(f, 2.0));
  EXPECT_EQ(ps.frame, 7u);
  for (const auto& p : ps.points) EXPECT_GE(f.at(static_cast<int>(p.pixel.x()), static_cast<int>(p.pixel.y())), 2.0);
}

TEST(ExtractPointsProperty, ComponentCountMatchesFloodFill) {
  std::mt19937_64 rng(35);
  std::uniform_int_distribution<std::uint32_t> val(0, 40);
  for (int trial = 0; trial < 30; ++trial) {
    EventImage img = blank(40, 30);
    for (auto& c : img.counts) c = val(rng) > 36 ? val(rng) : 0;
    const auto f = mean_filter(img);
    const auto ps = extract_points(f, 2.0, kCam);
    EXPECT_EQ(ps.size(), component_oracle(f, 2.0));
    std::set<std::pair<double, double>> unique;
    for (const auto& p : ps.points) unique.insert({p.pixel.x(), p.pixel.y()});
    EXPECT_EQ(unique.size(), ps.size());
  }
}

TEST(ExtractPointsProperty, InvariantToEventOrderWithinWindow) {
  std::mt19937_64 rng(36);
  for (int trial = 0; trial < 10; ++trial) {
    // Coarse timestamps create many ties; shuffle inside every tie group.
    std::vector<Event> ev = random_events(rng, 4000, 40, 30, 40);
    std::vector<Event> shuffled = ev;
    auto begin = shuffled.begin();
    while (begin != shuffled.end()) {
      auto end = std::find_if(begin, shuffled.end(), [&](const Event& e) { return e.t_us != begin->t_us; });
      std::shuffle(begin, end, rng);
      begin = end;
    }
    const auto a = build_event_images(ev, 40, 30, 0, 40000, 40.0);
    const auto b = build_event_images(shuffled, 40, 30, 0, 40000, 40.0);
    EXPECT_EQ(a.images[0].counts, b.images[0].counts);
    const auto pa = extract_points(mean_filter(a.images[0]), 2.0, kCam);
    const auto pb = extract_points(mean_filter(b.images[0]), 2.0, kCam);
    ASSERT_EQ(pa.size(), pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(pa.points[i].pixel, pb.points[i].pixel);
  }
}
