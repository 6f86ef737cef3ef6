#pragma once

// Append-only striped file store. A logical file is split into fixed-size
// chunks laid round-robin over an array of device directories; each device
// holds one segment file per logical file. Writes only ever append.

#include <fcntl.h>
#include <sys/stat.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cerrno>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "bigsr/error.hpp"

namespace bigsr {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian; big-endian hosts are unsupported");

inline constexpr std::uint64_t kDefaultChunkSize = std::uint64_t{1} << 20;

struct StoreConfig {
  std::vector<fs::path> device_dirs;
  std::uint64_t chunk_size = kDefaultChunkSize;
  unsigned read_queue_depth = 16;
  /// Per-device byte budget; 0 means unlimited.
  std::uint64_t device_capacity = 0;

  void validate() const {
    if (device_dirs.empty()) throw ConfigError("store needs at least one device directory");
    if (chunk_size < 4096 || !std::has_single_bit(chunk_size))
      throw ConfigError("chunk_size must be a power of two >= 4096");
    if (read_queue_depth == 0) throw ConfigError("read_queue_depth must be >= 1");
    for (std::size_t i = 0; i < device_dirs.size(); ++i)
      for (std::size_t j = i + 1; j < device_dirs.size(); ++j)
        if (fs::weakly_canonical(device_dirs[i]) == fs::weakly_canonical(device_dirs[j]))
          throw ConfigError("device directories must be distinct: " + device_dirs[i].string());
  }
};

struct StripeLocation {
  std::size_t device = 0;
  std::uint64_t local_offset = 0;

  friend bool operator==(const StripeLocation&, const StripeLocation&) = default;
};

constexpr StripeLocation stripe_map(std::uint64_t logical_offset, std::uint64_t chunk_size,
                                    std::size_t num_devices) {
  const std::uint64_t chunk = logical_offset / chunk_size;
  return {static_cast<std::size_t>(chunk % num_devices),
          (chunk / num_devices) * chunk_size + logical_offset % chunk_size};
}

/// Expected per-device segment length for a logical file of `length` bytes.
constexpr std::uint64_t segment_length_for(std::uint64_t length, std::uint64_t chunk_size,
                                           std::size_t num_devices, std::size_t device) {
  const std::uint64_t full_chunks = length / chunk_size;
  const std::uint64_t tail = length % chunk_size;
  std::uint64_t chunks_on_device = full_chunks / num_devices;
  if (device < full_chunks % num_devices) ++chunks_on_device;
  std::uint64_t bytes = chunks_on_device * chunk_size;
  if (tail && full_chunks % num_devices == device) bytes += tail;
  return bytes;
}

struct IoSnapshot {
  std::uint64_t read_ops = 0;
  std::uint64_t bytes_read = 0;
  std::uint64_t append_ops = 0;
  std::uint64_t bytes_appended = 0;
  std::uint64_t non_append_writes = 0;
};

class StripedFile;

namespace detail {

struct IoCounters {
  std::atomic<std::uint64_t> read_ops{0};
  std::atomic<std::uint64_t> bytes_read{0};
  std::atomic<std::uint64_t> append_ops{0};
  std::atomic<std::uint64_t> bytes_appended{0};
  std::atomic<std::uint64_t> non_append_writes{0};

  IoSnapshot snapshot() const {
    return {read_ops.load(), bytes_read.load(), append_ops.load(), bytes_appended.load(),
            non_append_writes.load()};
  }
};

struct StoreState {
  StoreConfig cfg;
  IoCounters io;
  std::vector<std::unique_ptr<std::counting_semaphore<>>> read_slots;
  std::unique_ptr<std::atomic<std::uint64_t>[]> device_used;
  std::mutex registry_mu;
  std::map<std::string, std::weak_ptr<StripedFile>> registry;
  std::atomic<std::uint64_t> temp_counter{0};

  std::size_t num_devices() const { return cfg.device_dirs.size(); }
};

inline std::string errno_text(int err) { return std::strerror(err); }

}  // namespace detail

/// One logical append-only file striped over the store's devices.
/// Appends must be serialized by the caller (one appender per file); reads
/// are thread-safe and may overlap with each other and with appends.
class StripedFile : public std::enable_shared_from_this<StripedFile> {
public:
  StripedFile(std::shared_ptr<detail::StoreState> state, std::string name, bool create)
      : state_(std::move(state)), name_(std::move(name)) {
    const auto n = state_->num_devices();
    fds_.assign(n, -1);
    seg_len_.assign(n, 0);
    int flags = O_RDWR | O_APPEND | O_CLOEXEC;
    if (create) flags |= O_CREAT | O_EXCL;
    for (std::size_t d = 0; d < n; ++d) {
      const fs::path p = segment_path(d);
      if (create) {
        std::error_code ec;
        fs::create_directories(p.parent_path(), ec);
      }
      const int fd = ::open(p.c_str(), flags, 0644);
      if (fd < 0) {
        const int err = errno;
        close_all();
        if (err == ENOENT) throw NotFound("no such striped file: " + name_);
        throw StorageError("open failed: " + detail::errno_text(err), p.string());
      }
      fds_[d] = fd;
      struct stat st {};
      if (::fstat(fd, &st) != 0) {
        close_all();
        throw StorageError("fstat failed", p.string());
      }
      seg_len_[d] = static_cast<std::uint64_t>(st.st_size);
    }
    std::uint64_t total = 0;
    for (auto s : seg_len_) total += s;
    for (std::size_t d = 0; d < n; ++d) {
      if (seg_len_[d] != segment_length_for(total, state_->cfg.chunk_size, n, d)) {
        close_all();
        throw CorruptionError("segment lengths of '" + name_ +
                              "' are inconsistent with round-robin striping");
      }
    }
    length_.store(total, std::memory_order_release);
  }

  ~StripedFile() { close_all(); }

  StripedFile(const StripedFile&) = delete;
  StripedFile& operator=(const StripedFile&) = delete;

  const std::string& name() const noexcept { return name_; }
  std::uint64_t length() const noexcept { return length_.load(std::memory_order_acquire); }
  bool removed() const noexcept { return removed_.load(); }

  fs::path segment_path(std::size_t device) const {
    return state_->cfg.device_dirs[device] / (name_ + ".seg" + std::to_string(device));
  }

  std::uint64_t segment_length(std::size_t device) const {
    std::lock_guard lk(append_mu_);
    return seg_len_[device];
  }

  /// Appends `data` at the end of the file and returns its logical offset.
  std::uint64_t append(std::span<const std::byte> data) {
    std::lock_guard lk(append_mu_);
    check_live();
    const auto& cfg = state_->cfg;
    const auto n = state_->num_devices();
    const std::uint64_t start = length_.load(std::memory_order_relaxed);
    std::uint64_t pos = start;
    std::size_t done = 0;
    while (done < data.size()) {
      const StripeLocation loc = stripe_map(pos, cfg.chunk_size, n);
      const std::uint64_t room = cfg.chunk_size - pos % cfg.chunk_size;
      const std::size_t piece =
          static_cast<std::size_t>(std::min<std::uint64_t>(room, data.size() - done));
      if (loc.local_offset != seg_len_[loc.device]) {
        // Would land anywhere but the segment tail: refuse and record it.
        state_->io.non_append_writes.fetch_add(1);
        throw CorruptionError("non-append write attempted on '" + name_ + "'");
      }
      if (cfg.device_capacity &&
          state_->device_used[loc.device].load() + piece > cfg.device_capacity)
        throw StorageExhausted("device full", cfg.device_dirs[loc.device].string());
      write_all(loc.device, data.subspan(done, piece));
      seg_len_[loc.device] += piece;
      state_->device_used[loc.device].fetch_add(piece);
      done += piece;
      pos += piece;
    }
    state_->io.append_ops.fetch_add(1);
    state_->io.bytes_appended.fetch_add(data.size());
    length_.store(pos, std::memory_order_release);
    return start;
  }

  /// Reads exactly out.size() bytes starting at `offset`.
  void read_at(std::uint64_t offset, std::span<std::byte> out) const {
    const std::uint64_t len = out.size();
    if (offset > length() || len > length() - offset)
      throw BoundsError("read [" + std::to_string(offset) + ", +" + std::to_string(len) +
                        ") beyond end of '" + name_ + "' (" + std::to_string(length()) + ")");
    check_live();
    outstanding_.fetch_add(1);
    struct Guard {
      const StripedFile* f;
      ~Guard() { f->outstanding_.fetch_sub(1); }
    } guard{this};
    const auto& cfg = state_->cfg;
    const auto n = state_->num_devices();
    std::uint64_t pos = offset;
    std::size_t done = 0;
    while (done < len) {
      const StripeLocation loc = stripe_map(pos, cfg.chunk_size, n);
      const std::size_t piece = static_cast<std::size_t>(
          std::min<std::uint64_t>(cfg.chunk_size - pos % cfg.chunk_size, len - done));
      auto& slot = *state_->read_slots[loc.device];
      slot.acquire();
      try {
        pread_all(loc.device, out.subspan(done, piece), loc.local_offset);
      } catch (...) {
        slot.release();
        throw;
      }
      slot.release();
      done += piece;
      pos += piece;
    }
    state_->io.read_ops.fetch_add(1);
    state_->io.bytes_read.fetch_add(len);
  }

  std::vector<std::byte> read_at(std::uint64_t offset, std::uint64_t len) const {
    std::vector<std::byte> buf(static_cast<std::size_t>(len));
    read_at(offset, std::span<std::byte>(buf));
    return buf;
  }

  /// Issues the read on a background thread. Futures from one requester
  /// complete independently; waiting on them in issue order yields data in
  /// issue order.
  std::future<std::vector<std::byte>> read_async(std::uint64_t offset, std::uint64_t len) const {
    if (offset > length() || len > length() - offset)
      throw BoundsError("async read beyond end of '" + name_ + "'");
    auto self = shared_from_this();
    return std::async(std::launch::async,
                      [self, offset, len] { return self->read_at(offset, len); });
  }

  void flush() {
    std::lock_guard lk(append_mu_);
    for (std::size_t d = 0; d < fds_.size(); ++d)
      if (fds_[d] >= 0 && ::fdatasync(fds_[d]) != 0)
        throw StorageError("fdatasync failed", segment_path(d).string());
  }

  int outstanding_reads() const noexcept { return outstanding_.load(); }

private:
  friend class Store;

  void check_live() const {
    if (removed_.load()) throw NotFound("striped file was deleted: " + name_);
  }

  void write_all(std::size_t device, std::span<const std::byte> bytes) {
    const char* p = reinterpret_cast<const char*>(bytes.data());
    std::size_t left = bytes.size();
    while (left) {
      const ssize_t w = ::write(fds_[device], p, left);
      if (w < 0) {
        if (errno == EINTR) continue;
        const int err = errno;
        const std::string dev = state_->cfg.device_dirs[device].string();
        if (err == ENOSPC || err == EDQUOT) throw StorageExhausted("device full", dev);
        throw StorageError("write failed: " + detail::errno_text(err), dev);
      }
      p += w;
      left -= static_cast<std::size_t>(w);
    }
  }

  void pread_all(std::size_t device, std::span<std::byte> out, std::uint64_t at) const {
    char* p = reinterpret_cast<char*>(out.data());
    std::size_t left = out.size();
    while (left) {
      const ssize_t r = ::pread(fds_[device], p, left, static_cast<off_t>(at));
      if (r < 0) {
        if (errno == EINTR) continue;
        throw StorageError("read failed: " + detail::errno_text(errno),
                           state_->cfg.device_dirs[device].string());
      }
      if (r == 0)
        throw StorageError("short read", state_->cfg.device_dirs[device].string());
      p += r;
      at += static_cast<std::uint64_t>(r);
      left -= static_cast<std::size_t>(r);
    }
  }

  void close_all() noexcept {
    for (int& fd : fds_) {
      if (fd >= 0) ::close(fd);
      fd = -1;
    }
  }

  std::shared_ptr<detail::StoreState> state_;
  std::string name_;
  std::vector<int> fds_;
  std::vector<std::uint64_t> seg_len_;
  std::atomic<std::uint64_t> length_{0};
  mutable std::atomic<int> outstanding_{0};
  std::atomic<bool> removed_{false};
  mutable std::mutex append_mu_;
};

using FileHandle = std::shared_ptr<StripedFile>;

/// Owns the device array. Cheap to copy; copies share state.
class Store {
public:
  explicit Store(StoreConfig cfg) : state_(std::make_shared<detail::StoreState>()) {
    cfg.validate();
    for (auto& d : cfg.device_dirs) {
      std::error_code ec;
      fs::create_directories(d, ec);
      if (ec) throw StorageError("cannot create device directory: " + ec.message(), d.string());
    }
    state_->cfg = std::move(cfg);
    const auto n = state_->num_devices();
    state_->device_used = std::make_unique<std::atomic<std::uint64_t>[]>(n);
    for (std::size_t d = 0; d < n; ++d) {
      state_->read_slots.push_back(
          std::make_unique<std::counting_semaphore<>>(state_->cfg.read_queue_depth));
      state_->device_used[d].store(scan_segment_bytes(state_->cfg.device_dirs[d]));
    }
  }

  const StoreConfig& config() const noexcept { return state_->cfg; }
  std::size_t num_devices() const noexcept { return state_->num_devices(); }

  FileHandle create(const std::string& name) {
    check_name(name);
    std::lock_guard lk(state_->registry_mu);
    if (fs::exists(manifest_path(name))) throw Error("striped file already exists: " + name);
    write_manifest(name);
    auto f = std::make_shared<StripedFile>(state_, name, true);
    state_->registry[name] = f;
    return f;
  }

  FileHandle open(const std::string& name) {
    check_name(name);
    std::lock_guard lk(state_->registry_mu);
    if (auto it = state_->registry.find(name); it != state_->registry.end())
      if (auto live = it->second.lock(); live && !live->removed()) return live;
    if (!fs::exists(manifest_path(name))) throw NotFound("no such striped file: " + name);
    check_manifest(name);
    auto f = std::make_shared<StripedFile>(state_, name, false);
    state_->registry[name] = f;
    return f;
  }

  bool exists(const std::string& name) const { return fs::exists(manifest_path(name)); }

  /// Removes every segment and the manifest. Rejected while reads are in flight.
  void remove(const FileHandle& f) {
    if (!f) return;
    if (f->outstanding_reads() > 0) throw InUse("striped file has outstanding reads: " + f->name());
    std::lock_guard lk(state_->registry_mu);
    if (f->removed_.exchange(true)) return;
    std::lock_guard alk(f->append_mu_);
    for (std::size_t d = 0; d < num_devices(); ++d) {
      std::error_code ec;
      fs::remove(f->segment_path(d), ec);
      state_->device_used[d].fetch_sub(f->seg_len_[d]);
    }
    std::error_code ec;
    fs::remove(manifest_path(f->name()), ec);
    f->close_all();
    state_->registry.erase(f->name());
  }

  void remove(const std::string& name) { remove(open(name)); }

  /// Logical names (optionally under a '/'-separated prefix), sorted.
  std::vector<std::string> list(const std::string& prefix = "") const {
    std::vector<std::string> out;
    const fs::path root = state_->cfg.device_dirs.front();
    std::error_code ec;
    for (auto it = fs::recursive_directory_iterator(root, ec);
         !ec && it != fs::recursive_directory_iterator(); it.increment(ec)) {
      const auto& p = it->path();
      if (p.extension() != ".manifest") continue;
      std::string rel = fs::relative(p, root).generic_string();
      rel.resize(rel.size() - std::string(".manifest").size());
      if (rel.rfind(prefix, 0) == 0) out.push_back(rel);
    }
    std::sort(out.begin(), out.end());
    return out;
  }

  /// Bytes currently held in segment files across all devices.
  std::uint64_t bytes_used() const {
    std::uint64_t t = 0;
    for (std::size_t d = 0; d < num_devices(); ++d) t += state_->device_used[d].load();
    return t;
  }

  IoSnapshot io() const { return state_->io.snapshot(); }

  /// Fresh logical name under `dir`, unique within this store: no file has
  /// that name and none lives below it, including ones left by earlier runs.
  std::string temp_name(const std::string& dir, const std::string& stem) {
    for (;;) {
      std::string n = dir + "/" + stem + "_" + std::to_string(state_->temp_counter.fetch_add(1));
      std::error_code ec;
      if (!exists(n) && !fs::exists(state_->cfg.device_dirs.front() / n, ec)) return n;
    }
  }

  /// Small ASCII sidecar files (graph manifests); live on device 0.
  void write_text(const std::string& name, const std::string& text) {
    check_name(name);
    const fs::path p = state_->cfg.device_dirs.front() / name;
    fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::trunc);
    os << text;
    if (!os) throw StorageError("cannot write " + name, state_->cfg.device_dirs.front().string());
  }

  std::string read_text(const std::string& name) const {
    const fs::path p = state_->cfg.device_dirs.front() / name;
    std::ifstream is(p);
    if (!is) throw NotFound("not found: " + name);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
  }

  bool text_exists(const std::string& name) const {
    return fs::exists(state_->cfg.device_dirs.front() / name);
  }

  fs::path manifest_path(const std::string& name) const {
    return state_->cfg.device_dirs.front() / (name + ".manifest");
  }

private:
  static void check_name(const std::string& name) {
    if (name.empty() || name.front() == '/' || name.find("..") != std::string::npos)
      throw ConfigError("invalid logical file name: '" + name + "'");
  }

  static std::uint64_t scan_segment_bytes(const fs::path& dir) {
    std::uint64_t total = 0;
    std::error_code ec;
    for (auto it = fs::recursive_directory_iterator(dir, ec);
         !ec && it != fs::recursive_directory_iterator(); it.increment(ec)) {
      if (it->is_regular_file(ec) && it->path().extension().string().rfind(".seg", 0) == 0)
        total += it->file_size(ec);
    }
    return total;
  }

  void write_manifest(const std::string& name) {
    const fs::path p = manifest_path(name);
    fs::create_directories(p.parent_path());
    std::ofstream os(p, std::ios::trunc);
    os << state_->cfg.chunk_size << '\n' << num_devices() << '\n';
    for (const auto& d : state_->cfg.device_dirs) os << fs::absolute(d).lexically_normal().string() << '\n';
    if (!os) throw StorageError("cannot write manifest for " + name, p.parent_path().string());
  }

  void check_manifest(const std::string& name) const {
    std::ifstream is(manifest_path(name));
    std::uint64_t chunk = 0;
    std::size_t n = 0;
    is >> chunk >> n;
    if (!is) throw FormatError("unreadable manifest for " + name);
    if (chunk != state_->cfg.chunk_size || n != num_devices())
      throw FormatError("manifest of '" + name + "' does not match store geometry (chunk " +
                        std::to_string(chunk) + ", devices " + std::to_string(n) + ")");
    std::string line;
    std::getline(is, line);
    for (std::size_t d = 0; d < n; ++d) {
      std::getline(is, line);
      const auto expect = fs::absolute(state_->cfg.device_dirs[d]).lexically_normal().string();
      if (line != expect)
        throw FormatError("manifest of '" + name + "' lists device " + std::to_string(d) +
                          " as " + line + ", store has " + expect);
    }
  }

  std::shared_ptr<detail::StoreState> state_;
};

}  // namespace bigsr
