#pragma once

#include "drone_carrier/batch.hpp"
#include "drone_carrier/common.hpp"
#include "drone_carrier/dubins.hpp"
#include "drone_carrier/estimation.hpp"
#include "drone_carrier/frames.hpp"
#include "drone_carrier/guidance.hpp"
#include "drone_carrier/manipulator.hpp"
#include "drone_carrier/mission.hpp"
#include "drone_carrier/perception.hpp"
#include "drone_carrier/plot.hpp"
#include "drone_carrier/random.hpp"
#include "drone_carrier/scenario.hpp"
#include "drone_carrier/sensors.hpp"
#include "drone_carrier/simulation.hpp"
#include "drone_carrier/uav.hpp"
#include "drone_carrier/usv_dynamics.hpp"
