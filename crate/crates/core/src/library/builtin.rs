use crate::simworld::ScenarioId;

type Fixture = (&'static [(&'static str, &'static str)], &'static str);

macro_rules! fixture {
    ($dir:literal: $($name:literal),+ $(,)?) => {
        (
            &[$(($name, include_str!(concat!("../../fixtures/library/", $dir, "/", $name, ".afn")))),+],
            include_str!(concat!("../../fixtures/library/", $dir, "/specs.jsonl")),
        )
    };
}

static PORT: Fixture = fixture!("port":
    "berth_close", "berth_usable", "crane_usable", "handling_time", "pick_berth", "plan",
    "vessel_arrival", "vessel_queue",
);

static WAREHOUSE: Fixture = fixture!("warehouse":
    "blocked_cells", "choose_slot", "extra_orders", "fleet", "free_slots", "order_active",
    "plan", "plan_leg", "robot_position", "robot_range", "robot_usable", "select_robot",
    "slot_usable", "task_board", "task_pickup",
);

static DECK: Fixture = fixture!("deck":
    "assignment", "blocked_cells", "candidates", "closed_lane_cells", "extra_tasks", "fleet",
    "hazard_cells", "jet_blast_cells", "kind_matches", "obstacle_cells", "ordered_tasks", "plan",
    "plan_route", "route_is_clear", "select_vehicle", "task_active", "task_board", "task_location",
    "task_priority", "travel_estimate", "vehicle_kind", "vehicle_position", "vehicle_range",
    "vehicle_usable", "within_range",
);

/// Sources and spec lines of the shipped library.
pub fn fixture(scenario: ScenarioId) -> Fixture {
    match scenario {
        ScenarioId::Port => PORT,
        ScenarioId::Warehouse => WAREHOUSE,
        ScenarioId::Deck => DECK,
    }
}
