#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "rsrl/rng.hpp"

namespace rsrl::flatland {

struct Color {
    double r = 0.0, g = 0.0, b = 0.0;
};

inline constexpr double kPi = 3.141592653589793238462643383279502884;

struct RectObstacle {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    Color color;
};

// Room with three fixed rectangular obstacles, 10 round blue obstacles and
// 10 round edibles placed per episode. Variants differ only in edible color:
// 1 = red, 2 = green, 3 = blue.
struct WorldConfig {
    double room_w = 20.0, room_h = 20.0;
    int n_blue_obstacles = 10;
    int n_edibles = 10;
    int variant_id = 1;
    int episode_len = 500;
    std::uint64_t rng_seed = 0;

    double agent_radius = 0.5;
    double item_radius = 0.5;
    double step_size = 0.5;
    double turn_angle = 12.0 * kPi / 180.0;
    double fov = kPi / 2.0;
    int image_width = 64;

    double spawn_x = 10.0, spawn_y = 1.5, spawn_heading = kPi / 2.0;

    std::vector<RectObstacle> fixed_obstacles{
        {2.5, 3.0, 5.0, 8.0, {0.9, 0.6, 0.1}},
        {12.0, 13.5, 17.5, 15.5, {0.6, 0.15, 0.7}},
        {13.0, 3.5, 15.0, 7.5, {0.1, 0.8, 0.8}},
    };

    Color wall_color{0.5, 0.5, 0.5};
    Color obstacle_color{0.0, 0.0, 1.0};
    Color background{0.0, 0.0, 0.0};

    Color edible_color() const;
    double max_ray_range() const;

    static WorldConfig variant(int id, std::uint64_t seed = 0);

    void save(const std::string& path) const;
    static WorldConfig load(const std::string& path);
};

// 1-D color observation, W x 3 values in [0,1], pixel-major layout.
struct StateImage {
    static constexpr int kWidth = 64;
    static constexpr int kChannels = 3;
    std::array<double, kWidth * kChannels> pix{};

    double& at(int w, int c) { return pix[static_cast<std::size_t>(w * kChannels + c)]; }
    double at(int w, int c) const { return pix[static_cast<std::size_t>(w * kChannels + c)]; }
};

struct AgentPose {
    double x = 0, y = 0;
    double heading = 0;  // radians
};

struct Disk {
    double x = 0, y = 0, r = 0.5;
    Color color;
    bool blocks = true;
    bool edible = false;
    bool alive = true;
};

enum class HitKind : int { none = 0, wall = 1, rect = 2, obstacle = 3, edible = 4 };

// Ray-castable scene; tests build these by hand.
struct Scene {
    std::vector<Disk> disks;
    std::vector<RectObstacle> rects;
    bool walls = true;
    double room_w = 20.0, room_h = 20.0;
    Color wall_color{0.5, 0.5, 0.5};
    Color background{0.0, 0.0, 0.0};
    double max_range = 20.0 * 1.4142135623730951;
};

// Nearest-hit raycast across the field of view; pixel color is the entity
// color scaled by max(0.2, 1 - d/max_range). `hits` (optional) receives the
// kind of entity each pixel's ray hit.
StateImage render_raycast(const Scene& scene, const AgentPose& pose, double fov, int width,
                          std::vector<HitKind>* hits = nullptr);

enum class Action : int { forward = 0, rotate_left = 1, rotate_right = 2 };
constexpr int kNumActions = 3;

struct StepOutcome {
    double reward = 0.0;
    bool done = false;
};

class Env {
public:
    Env(const WorldConfig& config, std::uint64_t episode_seed);

    // Dynamics only; rendering is separate so collectors can skip it.
    StepOutcome step_dynamics(Action a);
    StateImage observe(std::vector<HitKind>* hits = nullptr) const;

    struct StepResult {
        StateImage obs;
        double reward = 0.0;
        bool done = false;
    };
    StepResult step(Action a);

    const WorldConfig& config() const { return config_; }
    const AgentPose& pose() const { return pose_; }
    int steps_taken() const { return steps_; }
    bool done() const { return done_; }
    double episode_return() const { return episode_return_; }
    int edibles_remaining() const;
    bool pose_valid() const;  // inside room, outside all obstacles

    Scene scene() const;
    std::vector<Disk>& items() { return items_; }  // test access
    const std::vector<Disk>& items() const { return items_; }

private:
    WorldConfig config_;
    AgentPose pose_;
    std::vector<Disk> items_;
    int steps_ = 0;
    bool done_ = false;
    double episode_return_ = 0.0;

    bool blocked_at(double x, double y) const;
    double collect_at_pose();
};

inline std::pair<Env, StateImage> reset(const WorldConfig& config, std::uint64_t episode_seed) {
    Env env(config, episode_seed);
    StateImage obs = env.observe();
    return {std::move(env), obs};
}

struct EpisodeLog {
    std::vector<StateImage> observations;
    std::vector<int> actions;
    std::vector<double> rewards;
    double episode_return = 0.0;
};

// Uniform-random policy for one episode. Observations are recorded before
// each action when keep_observations is set.
EpisodeLog run_random_episode(const WorldConfig& config, std::uint64_t episode_seed,
                              std::uint64_t policy_seed, bool keep_observations);

// n_episodes x episode_len states of a uniform-random policy, in collection order.
std::vector<StateImage> collect_random(const WorldConfig& config, int n_episodes, std::uint64_t seed);

// Same policy, but renders only `max_states_per_episode` randomly chosen
// timesteps per episode (0 = all). Used where only a sample of states is
// scored and rendering is the dominant cost.
std::vector<StateImage> collect_random_subsampled(const WorldConfig& config, int n_episodes,
                                                  int max_states_per_episode, std::uint64_t seed);

// Dataset file: magic "RSRL", u32 count, u32 width, u32 channels, f32 payload.
void save_dataset(const std::string& path, const std::vector<StateImage>& states);
std::vector<StateImage> load_dataset(const std::string& path);

}  // namespace rsrl::flatland
