#include "rsrl/flatland.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace rsrl::flatland {

Color WorldConfig::edible_color() const {
    switch (variant_id) {
        case 1: return {1.0, 0.0, 0.0};
        case 2: return {0.0, 1.0, 0.0};
        case 3: return {0.0, 0.0, 1.0};
        default: throw std::invalid_argument("variant_id must be 1, 2 or 3");
    }
}

double WorldConfig::max_ray_range() const { return std::hypot(room_w, room_h); }

WorldConfig WorldConfig::variant(int id, std::uint64_t seed) {
    WorldConfig c;
    c.variant_id = id;
    c.rng_seed = seed;
    (void)c.edible_color();  // validates id
    return c;
}

void WorldConfig::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write config " + path);
    os << "variant_id=" << variant_id << "\n";
    os << "rng_seed=" << rng_seed << "\n";
    os << "episode_len=" << episode_len << "\n";
    os << "n_blue_obstacles=" << n_blue_obstacles << "\n";
    os << "n_edibles=" << n_edibles << "\n";
    os << "room_w=" << room_w << "\n";
    os << "room_h=" << room_h << "\n";
}

WorldConfig WorldConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read config " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    WorldConfig c;
    auto geti = [&](const char* k, int d) { return kv.count(k) ? std::stoi(kv[k]) : d; };
    auto getd = [&](const char* k, double d) { return kv.count(k) ? std::stod(kv[k]) : d; };
    c.variant_id = geti("variant_id", c.variant_id);
    c.rng_seed = kv.count("rng_seed") ? std::stoull(kv["rng_seed"]) : c.rng_seed;
    c.episode_len = geti("episode_len", c.episode_len);
    c.n_blue_obstacles = geti("n_blue_obstacles", c.n_blue_obstacles);
    c.n_edibles = geti("n_edibles", c.n_edibles);
    c.room_w = getd("room_w", c.room_w);
    c.room_h = getd("room_h", c.room_h);
    (void)c.edible_color();
    return c;
}

namespace {

constexpr double kEps = 1e-9;
constexpr double kInf = std::numeric_limits<double>::infinity();

double ray_circle(double ox, double oy, double dx, double dy, const Disk& c) {
    const double mx = c.x - ox, my = c.y - oy;
    const double b = dx * mx + dy * my;
    const double disc = b * b - (mx * mx + my * my - c.r * c.r);
    if (disc < 0.0) return kInf;
    const double t = b - std::sqrt(disc);
    return t > kEps ? t : kInf;
}

double ray_rect(double ox, double oy, double dx, double dy, const RectObstacle& r) {
    double tmin = -kInf, tmax = kInf;
    if (dx != 0.0) {
        double t1 = (r.x0 - ox) / dx, t2 = (r.x1 - ox) / dx;
        if (t1 > t2) std::swap(t1, t2);
        tmin = std::max(tmin, t1);
        tmax = std::min(tmax, t2);
    } else if (ox < r.x0 || ox > r.x1) {
        return kInf;
    }
    if (dy != 0.0) {
        double t1 = (r.y0 - oy) / dy, t2 = (r.y1 - oy) / dy;
        if (t1 > t2) std::swap(t1, t2);
        tmin = std::max(tmin, t1);
        tmax = std::min(tmax, t2);
    } else if (oy < r.y0 || oy > r.y1) {
        return kInf;
    }
    if (tmax < std::max(tmin, 0.0)) return kInf;
    return tmin > kEps ? tmin : kInf;
}

// Distance to the room walls for a ray starting inside the room.
double ray_walls(double ox, double oy, double dx, double dy, double w, double h) {
    double tx = kInf, ty = kInf;
    if (dx > 0.0) tx = (w - ox) / dx;
    else if (dx < 0.0) tx = -ox / dx;
    if (dy > 0.0) ty = (h - oy) / dy;
    else if (dy < 0.0) ty = -oy / dy;
    return std::min(tx, ty);
}

bool circle_rect_overlap(double cx, double cy, double r, const RectObstacle& rect) {
    const double px = std::clamp(cx, rect.x0, rect.x1);
    const double py = std::clamp(cy, rect.y0, rect.y1);
    const double dx = cx - px, dy = cy - py;
    return dx * dx + dy * dy < r * r;
}

}  // namespace

StateImage render_raycast(const Scene& scene, const AgentPose& pose, double fov, int width,
                          std::vector<HitKind>* hits) {
    StateImage img;
    if (hits) hits->assign(static_cast<std::size_t>(width), HitKind::none);
    for (int i = 0; i < width; ++i) {
        const double a = pose.heading + fov / 2.0 - (i + 0.5) * (fov / width);
        const double dx = std::cos(a), dy = std::sin(a);

        double best = kInf;
        Color color = scene.background;
        HitKind kind = HitKind::none;

        if (scene.walls) {
            const double t = ray_walls(pose.x, pose.y, dx, dy, scene.room_w, scene.room_h);
            if (t < best) {
                best = t;
                color = scene.wall_color;
                kind = HitKind::wall;
            }
        }
        for (const auto& r : scene.rects) {
            const double t = ray_rect(pose.x, pose.y, dx, dy, r);
            if (t < best) {
                best = t;
                color = r.color;
                kind = HitKind::rect;
            }
        }
        for (const auto& d : scene.disks) {
            if (!d.alive) continue;
            const double t = ray_circle(pose.x, pose.y, dx, dy, d);
            if (t < best) {
                best = t;
                color = d.color;
                kind = d.edible ? HitKind::edible : HitKind::obstacle;
            }
        }

        if (best <= scene.max_range) {
            const double shade = std::max(0.2, 1.0 - best / scene.max_range);
            img.at(i, 0) = color.r * shade;
            img.at(i, 1) = color.g * shade;
            img.at(i, 2) = color.b * shade;
            if (hits) (*hits)[static_cast<std::size_t>(i)] = kind;
        } else {
            img.at(i, 0) = scene.background.r;
            img.at(i, 1) = scene.background.g;
            img.at(i, 2) = scene.background.b;
        }
    }
    return img;
}

Env::Env(const WorldConfig& config, std::uint64_t episode_seed) : config_(config) {
    pose_ = {config_.spawn_x, config_.spawn_y, config_.spawn_heading};
    Rng rng(derive_seed(config_.rng_seed, "layout", episode_seed));

    const double ir = config_.item_radius;
    const int total = config_.n_blue_obstacles + config_.n_edibles;
    items_.reserve(static_cast<std::size_t>(total));
    for (int n = 0; n < total; ++n) {
        const bool edible = n >= config_.n_blue_obstacles;
        bool placed = false;
        for (int attempt = 0; attempt < 10000; ++attempt) {
            const double x = rng.uniform(ir, config_.room_w - ir);
            const double y = rng.uniform(ir, config_.room_h - ir);
            bool ok = true;
            for (const auto& rect : config_.fixed_obstacles)
                if (circle_rect_overlap(x, y, ir, rect)) { ok = false; break; }
            if (ok) {
                const double dxs = x - config_.spawn_x, dys = y - config_.spawn_y;
                if (dxs * dxs + dys * dys < (ir + config_.agent_radius + 1e-6) * (ir + config_.agent_radius + 1e-6))
                    ok = false;
            }
            if (ok) {
                for (const auto& d : items_) {
                    const double dx = x - d.x, dy = y - d.y;
                    if (dx * dx + dy * dy < (ir + d.r) * (ir + d.r)) { ok = false; break; }
                }
            }
            if (!ok) continue;
            Disk d;
            d.x = x;
            d.y = y;
            d.r = ir;
            d.edible = edible;
            d.blocks = !edible;
            d.color = edible ? config_.edible_color() : config_.obstacle_color;
            items_.push_back(d);
            placed = true;
            break;
        }
        if (!placed)
            throw std::runtime_error("item placement failed after 10000 rejection attempts; room too crowded");
    }
}

bool Env::blocked_at(double x, double y) const {
    const double ar = config_.agent_radius;
    if (x < ar || x > config_.room_w - ar || y < ar || y > config_.room_h - ar) return true;
    for (const auto& rect : config_.fixed_obstacles)
        if (circle_rect_overlap(x, y, ar, rect)) return true;
    for (const auto& d : items_) {
        if (!d.alive || !d.blocks) continue;
        const double dx = x - d.x, dy = y - d.y;
        if (dx * dx + dy * dy < (ar + d.r) * (ar + d.r)) return true;
    }
    return false;
}

double Env::collect_at_pose() {
    double reward = 0.0;
    for (auto& d : items_) {
        if (!d.alive || !d.edible) continue;
        const double dx = pose_.x - d.x, dy = pose_.y - d.y;
        if (dx * dx + dy * dy < (config_.agent_radius + d.r) * (config_.agent_radius + d.r)) {
            d.alive = false;
            reward += 10.0;
        }
    }
    return reward;
}

StepOutcome Env::step_dynamics(Action a) {
    if (done_) throw std::logic_error("step after episode end");
    switch (a) {
        case Action::forward: {
            const double nx = pose_.x + config_.step_size * std::cos(pose_.heading);
            const double ny = pose_.y + config_.step_size * std::sin(pose_.heading);
            if (!blocked_at(nx, ny)) {
                pose_.x = nx;
                pose_.y = ny;
            }
            break;
        }
        case Action::rotate_left:
            pose_.heading = std::remainder(pose_.heading + config_.turn_angle, 2.0 * kPi);
            break;
        case Action::rotate_right:
            pose_.heading = std::remainder(pose_.heading - config_.turn_angle, 2.0 * kPi);
            break;
    }
    StepOutcome out;
    out.reward = collect_at_pose();
    episode_return_ += out.reward;
    steps_ += 1;
    if (steps_ >= config_.episode_len) done_ = true;
    out.done = done_;
    return out;
}

Scene Env::scene() const {
    Scene s;
    s.disks = items_;
    s.rects = config_.fixed_obstacles;
    s.walls = true;
    s.room_w = config_.room_w;
    s.room_h = config_.room_h;
    s.wall_color = config_.wall_color;
    s.background = config_.background;
    s.max_range = config_.max_ray_range();
    return s;
}

StateImage Env::observe(std::vector<HitKind>* hits) const {
    return render_raycast(scene(), pose_, config_.fov, config_.image_width, hits);
}

Env::StepResult Env::step(Action a) {
    StepOutcome o = step_dynamics(a);
    return {observe(), o.reward, o.done};
}

int Env::edibles_remaining() const {
    int n = 0;
    for (const auto& d : items_)
        if (d.alive && d.edible) ++n;
    return n;
}

bool Env::pose_valid() const { return !blocked_at(pose_.x, pose_.y); }

EpisodeLog run_random_episode(const WorldConfig& config, std::uint64_t episode_seed,
                              std::uint64_t policy_seed, bool keep_observations) {
    Env env(config, episode_seed);
    Rng policy(policy_seed);
    EpisodeLog log;
    if (keep_observations) log.observations.reserve(static_cast<std::size_t>(config.episode_len));
    for (int t = 0; t < config.episode_len; ++t) {
        if (keep_observations) log.observations.push_back(env.observe());
        const int a = policy.uniform_int(kNumActions);
        StepOutcome o = env.step_dynamics(static_cast<Action>(a));
        log.actions.push_back(a);
        log.rewards.push_back(o.reward);
    }
    log.episode_return = env.episode_return();
    return log;
}

std::vector<StateImage> collect_random(const WorldConfig& config, int n_episodes, std::uint64_t seed) {
    if (n_episodes < 1) throw std::invalid_argument("collect_random: n_episodes must be >= 1");
    std::vector<StateImage> out;
    out.reserve(static_cast<std::size_t>(n_episodes) * static_cast<std::size_t>(config.episode_len));
    for (int ep = 0; ep < n_episodes; ++ep) {
        EpisodeLog log = run_random_episode(config, derive_seed(seed, "episode", static_cast<std::uint64_t>(ep)),
                                            derive_seed(seed, "policy", static_cast<std::uint64_t>(ep)), true);
        for (auto& s : log.observations) out.push_back(s);
    }
    return out;
}

std::vector<StateImage> collect_random_subsampled(const WorldConfig& config, int n_episodes,
                                                  int max_states_per_episode, std::uint64_t seed) {
    if (max_states_per_episode <= 0 || max_states_per_episode >= config.episode_len)
        return collect_random(config, n_episodes, seed);
    std::vector<StateImage> out;
    out.reserve(static_cast<std::size_t>(n_episodes) * static_cast<std::size_t>(max_states_per_episode));
    for (int ep = 0; ep < n_episodes; ++ep) {
        Env env(config, derive_seed(seed, "episode", static_cast<std::uint64_t>(ep)));
        Rng policy(derive_seed(seed, "policy", static_cast<std::uint64_t>(ep)));
        Rng pick(derive_seed(seed, "subsample", static_cast<std::uint64_t>(ep)));

        // partial Fisher-Yates: first max_states entries of a shuffled [0, len)
        std::vector<int> ts(static_cast<std::size_t>(config.episode_len));
        for (int i = 0; i < config.episode_len; ++i) ts[static_cast<std::size_t>(i)] = i;
        for (int i = 0; i < max_states_per_episode; ++i) {
            const int j = i + pick.uniform_int(config.episode_len - i);
            std::swap(ts[static_cast<std::size_t>(i)], ts[static_cast<std::size_t>(j)]);
        }
        std::vector<int> chosen(ts.begin(), ts.begin() + max_states_per_episode);
        std::sort(chosen.begin(), chosen.end());

        std::size_t next = 0;
        for (int t = 0; t < config.episode_len; ++t) {
            if (next < chosen.size() && chosen[next] == t) {
                out.push_back(env.observe());
                ++next;
            }
            env.step_dynamics(static_cast<Action>(policy.uniform_int(kNumActions)));
        }
    }
    return out;
}

namespace {

void write_u32le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32le(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw std::runtime_error("dataset truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void save_dataset(const std::string& path, const std::vector<StateImage>& states) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write dataset " + path);
    os.write("RSRL", 4);
    write_u32le(os, static_cast<std::uint32_t>(states.size()));
    write_u32le(os, StateImage::kWidth);
    write_u32le(os, StateImage::kChannels);
    std::vector<float> buf(StateImage::kWidth * StateImage::kChannels);
    for (const auto& s : states) {
        for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = static_cast<float>(s.pix[i]);
        os.write(reinterpret_cast<const char*>(buf.data()),
                 static_cast<std::streamsize>(buf.size() * sizeof(float)));
    }
    if (!os) throw std::runtime_error("failed writing dataset " + path);
}

std::vector<StateImage> load_dataset(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read dataset " + path);
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "RSRL", 4) != 0) throw std::runtime_error("bad dataset magic in " + path);
    const std::uint32_t count = read_u32le(is);
    const std::uint32_t width = read_u32le(is);
    const std::uint32_t channels = read_u32le(is);
    if (width != StateImage::kWidth || channels != StateImage::kChannels)
        throw std::runtime_error("unexpected dataset geometry in " + path);
    std::vector<StateImage> states(count);
    std::vector<float> buf(width * channels);
    for (auto& s : states) {
        is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size() * sizeof(float)));
        if (!is) throw std::runtime_error("dataset truncated: " + path);
        for (std::size_t i = 0; i < buf.size(); ++i) s.pix[i] = static_cast<double>(buf[i]);
    }
    return states;
}

}  // namespace rsrl::flatland
