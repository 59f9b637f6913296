#pragma once

#include <array>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <string>
#include <vector>

#include "fade/error.hpp"

namespace fade::cspp {

enum class SlotState : std::uint8_t { empty, filling, full, draining };

inline const char* to_string(SlotState s) noexcept {
    switch (s) {
        case SlotState::empty: return "empty";
        case SlotState::filling: return "filling";
        case SlotState::full: return "full";
        case SlotState::draining: return "draining";
    }
    return "?";
}

struct SlotEvent {
    std::uint64_t seq;
    std::uint32_t slot;
    SlotState from;
    SlotState to;
};

/// Two-slot handoff between one producer and one consumer. Slots cycle
/// empty -> filling -> full -> draining -> empty; the producer and consumer
/// each walk the slots alternately, so payloads are never copied.
///
/// acquire_* return nullptr once the buffer is aborted, and acquire_read
/// returns nullptr after close() once no full slot remains.
template <typename Payload>
class PingPongBuffer {
public:
    explicit PingPongBuffer(const Payload& initial = Payload{}, bool record = false)
        : slots_{initial, initial}, record_(record) {}

    PingPongBuffer(const PingPongBuffer&) = delete;
    PingPongBuffer& operator=(const PingPongBuffer&) = delete;

    Payload* acquire_write() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return aborted_ || states_[write_] == SlotState::empty; });
        if (aborted_) return nullptr;
        if (closed_) fail(ErrorCode::usage, "ping-pong buffer: write after close");
        transition(write_, SlotState::empty, SlotState::filling);
        return &slots_[write_];
    }

    void publish() {
        {
            std::lock_guard lock(mu_);
            transition(write_, SlotState::filling, SlotState::full);
            write_ ^= 1u;
        }
        cv_.notify_all();
    }

    Payload* acquire_read() {
        std::unique_lock lock(mu_);
        cv_.wait(lock, [&] { return aborted_ || closed_ || states_[read_] == SlotState::full; });
        if (aborted_) return nullptr;
        if (states_[read_] != SlotState::full) return nullptr;  // closed and drained
        transition(read_, SlotState::full, SlotState::draining);
        return &slots_[read_];
    }

    void release() {
        {
            std::lock_guard lock(mu_);
            transition(read_, SlotState::draining, SlotState::empty);
            read_ ^= 1u;
        }
        cv_.notify_all();
    }

    /// Producer is done; the consumer drains what is left.
    void close() {
        {
            std::lock_guard lock(mu_);
            closed_ = true;
        }
        cv_.notify_all();
    }

    /// Wakes both sides; every later acquire returns nullptr.
    void abort() {
        {
            std::lock_guard lock(mu_);
            aborted_ = true;
        }
        cv_.notify_all();
    }

    SlotState state(std::uint32_t slot) const {
        std::lock_guard lock(mu_);
        return states_.at(slot);
    }

    std::vector<SlotEvent> events() const {
        std::lock_guard lock(mu_);
        return events_;
    }

private:
    void transition(std::uint32_t slot, SlotState from, SlotState to) {
        if (states_[slot] != from)
            fail(ErrorCode::usage, std::string("ping-pong buffer: slot ") + std::to_string(slot) + " is " +
                                       to_string(states_[slot]) + ", expected " + to_string(from));
        states_[slot] = to;
        if (record_) events_.push_back({seq_, slot, from, to});
        ++seq_;
    }

    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::array<Payload, 2> slots_;
    std::array<SlotState, 2> states_{SlotState::empty, SlotState::empty};
    std::uint32_t write_ = 0;
    std::uint32_t read_ = 0;
    bool closed_ = false;
    bool aborted_ = false;
    bool record_ = false;
    std::uint64_t seq_ = 0;
    std::vector<SlotEvent> events_;
};

}  // namespace fade::cspp
