#pragma once

// Umbrella header for the whole library.

#include "core.hpp"
#include "error.hpp"
#include "fake_transport.hpp"
#include "group_tree.hpp"
#include "net.hpp"
#include "partition.hpp"
#include "plogp.hpp"
#include "prober.hpp"
#include "registry.hpp"
#include "rendezvous.hpp"
#include "synth.hpp"
#include "text.hpp"
#include "timings.hpp"
#include "transport.hpp"
#include "wire.hpp"
