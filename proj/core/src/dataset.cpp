#include "slm/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "slm/image_io.hpp"

namespace slm {

namespace {

namespace fs = std::filesystem;

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string field;
  while (std::getline(ss, field, ',')) out.push_back(field);
  return out;
}

}  // namespace

void write_dataset(const std::vector<Sample>& samples, const std::string& dir,
                   std::uint64_t master_seed) {
  fs::create_directories(fs::path(dir) / "images");
  fs::create_directories(fs::path(dir) / "masks");
  std::ofstream manifest(fs::path(dir) / "manifest.csv");
  if (!manifest) throw std::runtime_error("write_dataset: cannot write manifest in " + dir);
  manifest << "# master_seed=" << master_seed << "\n";
  manifest << "case_id,patient_id,image_path,mask_path,sy_mm,sx_mm,length_mm,length_px\n";
  for (const auto& s : samples) {
    char name[32];
    std::snprintf(name, sizeof(name), "case_%04d.png", s.case_id);
    const std::string img_rel = std::string("images/") + name;
    write_image_png((fs::path(dir) / img_rel).string(), s.image);
    std::string mask_rel;
    if (s.mask) {
      mask_rel = std::string("masks/") + name;
      write_mask_png((fs::path(dir) / mask_rel).string(), *s.mask);
    }
    manifest << s.case_id << "," << s.patient_id << "," << img_rel << "," << mask_rel << ","
             << fmt_double(s.image.sy) << "," << fmt_double(s.image.sx) << ","
             << fmt_double(s.length_mm) << "," << fmt_double(s.length_px) << "\n";
  }
}

std::vector<Sample> read_dataset(const std::string& dir) {
  std::ifstream manifest(fs::path(dir) / "manifest.csv");
  if (!manifest) throw std::runtime_error("read_dataset: missing manifest.csv in " + dir);
  std::vector<Sample> samples;
  std::string line;
  while (std::getline(manifest, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (line.rfind("case_id,", 0) == 0) continue;  // header
    auto f = split_csv_line(line);
    if (f.size() < 8) throw std::runtime_error("read_dataset: malformed manifest row: " + line);
    Sample s;
    s.case_id = std::stoi(f[0]);
    try {
      s.patient_id = std::stoi(f[1]);
      s.image = read_image_png((fs::path(dir) / f[2]).string());
      s.image.sy = std::stod(f[4]);
      s.image.sx = std::stod(f[5]);
      if (!f[3].empty()) {
        BinaryMask m = read_mask_png((fs::path(dir) / f[3]).string());
        if (m.height != s.image.height || m.width != s.image.width)
          throw std::runtime_error("mask shape disagrees with image");
        m.sy = s.image.sy;
        m.sx = s.image.sx;
        s.mask = std::move(m);
      }
      s.length_mm = std::stod(f[6]);
      s.length_px = std::stod(f[7]);
    } catch (const std::exception& e) {
      throw std::runtime_error("read_dataset: case_id " + f[0] + ": " + e.what());
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace slm
