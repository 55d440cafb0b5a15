#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "doctest.h"
#include "rqen/dataset.hpp"
#include "rqen/errors.hpp"
#include "rqen/image_io.hpp"

using namespace rqen;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = slurp(e.path());
  return out;
}

Image gradient_image(std::size_t w, std::size_t h, std::size_t channels) {
  Image img{w, h, channels, {}};
  img.pixels.resize(w * h * channels);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<std::uint8_t>(i * 37 % 256);
  return img;
}

SynthConfig small_synth() {
  SynthConfig c;
  c.identities = 10;
  c.cameras = 2;
  c.frames = 5;
  c.seed = 21;
  return c;
}

}  // namespace

TEST_CASE("pnm roundtrip") {
  TempDir dir("rqen_pnm_test");
  for (std::size_t ch : {1u, 3u}) {
    const Image img = gradient_image(5, 7, ch);
    const fs::path p = dir.path / (ch == 1 ? "a.pgm" : "a.ppm");
    write_pnm(p, img);
    CHECK(read_pnm(p) == img);
  }
  // Header comments and arbitrary whitespace.
  std::string bytes = "P5\n# made by hand\n2  1\n255\n";
  bytes += '\x10';
  bytes += '\xff';
  write_text(dir.path / "c.pgm", bytes);
  const Image c = read_pnm(dir.path / "c.pgm");
  CHECK(c.width == 2);
  CHECK(c.channels == 1);
  CHECK(c.pixels == std::vector<std::uint8_t>{0x10, 0xff});
  const Tensor t = image_to_tensor(c);
  CHECK(t.shape() == Shape{1, 1, 2});
  CHECK(t[1] == 1.0);

  write_text(dir.path / "bad.ppm", "P3\n1 1\n255\n0 0 0\n");
  CHECK_THROWS_AS(read_pnm(dir.path / "bad.ppm"), DataError);
  write_text(dir.path / "short.ppm", "P6\n4 4\n255\nabc");
  CHECK_THROWS_AS(read_pnm(dir.path / "short.ppm"), DataError);
  CHECK_THROWS_AS(read_pnm(dir.path / "missing.ppm"), DataError);
}

TEST_CASE("manifest loading") {
  TempDir dir("rqen_manifest_test");
  fs::create_directories(dir.path / "img");

  SUBCASE("one tracklet with three frames") {
    std::string text = std::string(kManifestHeader) + "\n";
    for (int f = 0; f < 3; ++f) {
      Image img = gradient_image(4, 6, 3);
      img.pixels[0] = static_cast<std::uint8_t>(f);
      const std::string name = "img/f" + std::to_string(f) + ".ppm";
      write_pnm(dir.path / name, img);
      text += "t1\tperson\tcamA\t" + name + "\n";
    }
    write_text(dir.path / "manifest.tsv", text);
    for (const fs::path& arg : {dir.path, dir.path / "manifest.tsv"}) {
      const Dataset ds = load_dataset(arg);
      REQUIRE(ds.tracklets.size() == 1);
      CHECK(ds.tracklets[0].size() == 3);
      CHECK(ds.frame_shape() == Shape{3, 6, 4});
      CHECK(ds.identity_names == std::vector<std::string>{"person"});
      CHECK(ds.tracklets[0].frames[2 * 72] == doctest::Approx(2.0 / 255.0));
    }
  }

  SUBCASE("errors") {
    write_text(dir.path / "manifest.tsv", "");
    CHECK_THROWS_AS(load_dataset(dir.path), DataError);
    write_text(dir.path / "manifest.tsv", std::string(kManifestHeader) + "\n");
    CHECK_THROWS_AS(load_dataset(dir.path), DataError);
    write_text(dir.path / "manifest.tsv", "wrong\theader\n");
    CHECK_THROWS_AS(load_dataset(dir.path), DataError);
    write_text(dir.path / "manifest.tsv", std::string(kManifestHeader) + "\nt1\tp\tc\n");
    CHECK_THROWS_AS(load_dataset(dir.path), DataError);
    write_text(dir.path / "manifest.tsv", std::string(kManifestHeader) + "\nt1\tp\tc\timg/nope.ppm\n");
    try {
      load_dataset(dir.path);
      FAIL("expected an error");
    } catch (const DataError& e) {
      const std::string msg = e.what();
      CHECK(msg.find("manifest.tsv:2") != std::string::npos);
      CHECK(msg.find("nope.ppm") != std::string::npos);
    }
    write_pnm(dir.path / "img/a.ppm", gradient_image(4, 6, 3));
    write_pnm(dir.path / "img/b.ppm", gradient_image(4, 5, 3));
    write_text(dir.path / "manifest.tsv",
               std::string(kManifestHeader) + "\nt1\tp\tc\timg/a.ppm\nt1\tp\tc\timg/b.ppm\n");
    CHECK_THROWS_AS(load_dataset(dir.path), DataError);
    write_text(dir.path / "manifest.tsv",
               std::string(kManifestHeader) + "\nt1\tp\tc\timg/a.ppm\nt1\tq\tc\timg/a.ppm\n");
    CHECK_THROWS_AS(load_dataset(dir.path), DataError);
    CHECK_THROWS_AS(load_dataset(dir.path / "nothing-here"), DataError);
  }
}

TEST_CASE("synthetic data") {
  const SynthConfig cfg = small_synth();

  SUBCASE("counts and identities") {
    const SyntheticDataset data = generate_synthetic(cfg);
    CHECK(data.tracklets.size() == 20);
    const Dataset ds = to_dataset(data);
    CHECK(ds.identity_count() == 10);
    CHECK(ds.camera_count() == 2);
    for (const auto& t : ds.tracklets) CHECK(t.size() == 5);
    CHECK(ds.frame_shape() == Shape{3, 16, 8});
  }

  SUBCASE("no occlusion means every frame is clean") {
    SynthConfig c = cfg;
    c.occlusion.fraction = 0.0;
    for (const auto& t : generate_synthetic(c).tracklets)
      for (const auto& f : t.frames) CHECK_FALSE(f.occluded);
  }

  SUBCASE("occluded frames carry the occluder pattern") {
    SynthConfig c = cfg;
    c.occlusion.fraction = 0.5;
    c.occlusion.region = Region::middle;
    const SyntheticDataset data = generate_synthetic(c);
    CHECK(data.occluded_rows.begin == 6);
    CHECK(data.occluded_rows.end == 11);
    std::size_t occluded = 0, total = 0;
    for (const auto& t : data.tracklets)
      for (const auto& f : t.frames) {
        ++total;
        bool matches = true;
        for (std::size_t y = 0; y < data.occluder.height; ++y)
          for (std::size_t x = 0; x < c.width; ++x)
            for (std::size_t ch = 0; ch < 3; ++ch)
              matches = matches && f.image.at(data.occluded_rows.begin + y, x, ch) == data.occluder.at(y, x, ch);
        CHECK(matches == f.occluded);
        occluded += f.occluded;
      }
    CHECK(occluded > total / 4);
    CHECK(occluded < 3 * total / 4);
  }

  SUBCASE("written trees are byte-identical and load back exactly") {
    TempDir a("rqen_synth_a"), b("rqen_synth_b");
    SynthConfig c = cfg;
    c.occlusion.fraction = 0.3;
    const DatasetManifest m = synth_generate(c, a.path);
    synth_generate(c, b.path);
    CHECK(tree_bytes(a.path) == tree_bytes(b.path));
    CHECK(m.rows.size() == 100);
    REQUIRE(m.occlusion_truth.has_value());

    const SyntheticDataset mem = generate_synthetic(c);
    const Dataset loaded = load_dataset(a.path), direct = to_dataset(mem);
    REQUIRE(loaded.tracklets.size() == direct.tracklets.size());
    for (std::size_t i = 0; i < loaded.tracklets.size(); ++i) {
      CHECK(loaded.tracklets[i].id == direct.tracklets[i].id);
      CHECK(loaded.tracklets[i].identity == direct.tracklets[i].identity);
      CHECK(loaded.tracklets[i].camera == direct.tracklets[i].camera);
      CHECK(loaded.tracklets[i].frames == direct.tracklets[i].frames);
      CHECK(loaded.tracklets[i].frame_paths == direct.tracklets[i].frame_paths);
    }

    const auto truth = read_occlusion_truth(*m.occlusion_truth);
    CHECK(truth.size() == 300);
    std::map<std::string, bool> expect;
    for (const auto& t : mem.tracklets)
      for (const auto& f : t.frames) expect[f.path] = f.occluded;
    for (const auto& row : truth)
      CHECK(row.occluded == (row.region == Region::middle && expect.at(row.frame_path)));
  }

  SUBCASE("other seeds give other data") {
    SynthConfig c = cfg;
    c.seed = 22;
    CHECK(generate_synthetic(c).tracklets[0].frames[0].image != generate_synthetic(cfg).tracklets[0].frames[0].image);
  }

  SUBCASE("bad configs") {
    SynthConfig c = cfg;
    c.identities = 0;
    CHECK_THROWS(generate_synthetic(c));
    c = cfg;
    c.occlusion.fraction = 1.5;
    CHECK_THROWS(generate_synthetic(c));
    c = cfg;
    c.height = 2;
    CHECK_THROWS(generate_synthetic(c));
  }
}

TEST_CASE("protocol splits") {
  const Dataset ds = to_dataset(generate_synthetic(small_synth()));

  SUBCASE("fifty-fifty") {
    const DatasetSplit s = split_protocol(ds, Protocol::fifty_fifty_cross_camera, 4);
    CHECK(s.train_identities.size() == 5);
    CHECK(s.test_identities.size() == 5);
    std::set<int> train(s.train_identities.begin(), s.train_identities.end());
    for (int id : s.test_identities) CHECK(train.count(id) == 0);
    CHECK(s.train.size() == 10);
    CHECK(s.probe.size() == 5);
    CHECK(s.gallery.size() == 5);
    std::set<int> probe_ids;
    for (std::size_t i : s.probe) probe_ids.insert(ds.tracklets[i].identity);
    CHECK(probe_ids.size() == 5);
    for (std::size_t p : s.probe)
      for (std::size_t g : s.gallery)
        if (ds.tracklets[p].identity == ds.tracklets[g].identity)
          CHECK(ds.tracklets[p].camera != ds.tracklets[g].camera);
    for (std::size_t i : s.train) CHECK(train.count(ds.tracklets[i].identity) == 1);

    const DatasetSplit again = split_protocol(ds, Protocol::fifty_fifty_cross_camera, 4);
    CHECK(again.train == s.train);
    bool differs = false;
    for (std::uint64_t seed = 5; seed < 10; ++seed)
      differs = differs || split_protocol(ds, Protocol::fifty_fifty_cross_camera, seed).train_identities !=
                               s.train_identities;
    CHECK(differs);
  }

  SUBCASE("random probe cameras") {
    SplitOptions o;
    o.random_probe_camera = true;
    std::set<int> seen;
    for (std::uint64_t r = 0; r < 10; ++r) {
      o.role_seed = r;
      for (std::size_t i : split_protocol(ds, Protocol::fifty_fifty_cross_camera, 4, o).probe)
        seen.insert(ds.tracklets[i].camera);
    }
    CHECK(seen.size() == 2);
  }

  SUBCASE("scene split") {
    SynthConfig c = small_synth();
    c.cameras = 3;
    const Dataset three = to_dataset(generate_synthetic(c));
    SplitOptions o;
    o.test_cameras = {1, 2};
    o.probe_camera = 1;
    // Every identity appears under every camera, so nothing is left to train on.
    CHECK_THROWS_AS(split_protocol(three, Protocol::scene_split, 0, o), DataError);
    o.probe_camera = 0;
    CHECK_THROWS_AS(split_protocol(three, Protocol::scene_split, 0, o), DataError);
  }

  SUBCASE("one camera cannot be split") {
    SynthConfig c = small_synth();
    c.cameras = 1;
    c.tracklets_per_camera = 2;
    CHECK_THROWS_AS(split_protocol(to_dataset(generate_synthetic(c)), Protocol::fifty_fifty_cross_camera, 0),
                    DataError);
  }

  CHECK(parse_protocol("fifty-fifty") == Protocol::fifty_fifty_cross_camera);
  CHECK(protocol_name(parse_protocol("scene-split")) == "scene-split");
  CHECK_THROWS(parse_protocol("other"));
}
