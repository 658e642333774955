//! Agent-facing prompt text. Nothing here may reveal the law, hidden particles or
//! any hidden numeric value; the world-specific part describes only the
//! experiment interface.

use super::SessionState;
use crate::engine::MAX_MEASUREMENTS;
use crate::lawrunner::MAX_PARAMS;
use crate::types::{Topology, WorldDefinition};
use crate::vec2::Vec2;

/// Opening instructions shared by every world.
pub const UNIVERSAL_PROMPT: &str = "You are an expert physicist and AI research scientist tasked with discovering scientific laws in a simulated universe. Your goal is to propose experiments, analyze the data they return, and ultimately deduce the underlying scientific law. Please note that the laws of physics in this universe may differ from those in our own. You can perform experiments to gather data, but you must follow the protocol strictly.";

fn pair(v: Vec2) -> String {
    format!("[{}, {}]", v.x, v.y)
}

fn visible_listing(world: &WorldDefinition) -> String {
    let mut out = String::new();
    for (i, p) in world.roster.iter().take(world.visible_count).enumerate() {
        let state = if world.roster_pinned(i) {
            format!("  particle {i}: position {} (held fixed)\n", pair(p.position))
        } else {
            format!(
                "  particle {i}: position {}, velocity {}\n",
                pair(p.position),
                pair(p.velocity)
            )
        };
        out.push_str(&state);
    }
    out
}

fn interface_text(world: &WorldDefinition) -> String {
    let slots = world.agent_slots;
    let times = format!(
        "\"measurement_times\" is a strictly increasing list of up to {MAX_MEASUREMENTS} times (≤ 100). \
         An optional \"start_time\" (default 0, not after the first measurement time) sets when the simulation starts."
    );
    match world.topology {
        Topology::TwoParticle => format!(
            "The world contains two particles. Particle 0 sits at the origin and stays there; you set \
             its scalar property p1. Particle 1 starts at pos2 with velocity vel2 and carries a \
             positive scalar property p2. Data rows report both particles.\n\
             Experiment format:\n\
             {{\"p1\": 1.0, \"p2\": 1.0, \"pos2\": [5.0, 0.0], \"vel2\": [0.0, 0.5], \"measurement_times\": [1, 2, 4]}}\n{times}"
        ),
        Topology::ProbeOnly => format!(
            "The world already contains {} particles at the positions below. You add exactly {slots} \
             probe particles, each with a position and velocity. Data rows report the listed \
             particles first (indices 0..{}) and then your probes in the order given.\n{}\
             Experiment format:\n\
             {{\"probes\": [{{\"position\": [x, y], \"velocity\": [vx, vy]}}, ... {slots} entries], \"measurement_times\": [1, 2, 4]}}\n{times}",
            world.visible_count,
            world.visible_count,
            visible_listing(world)
        ),
        Topology::AnchorRingProbes => format!(
            "The world already contains {} particles whose initial states are listed below. You add \
             exactly {slots} probe particles, each with a position, a velocity and a positive mass. \
             Data rows report the listed particles first and then your probes in the order given.\n{}\
             Experiment format:\n\
             {{\"probes\": [{{\"position\": [x, y], \"velocity\": [vx, vy], \"mass\": 1.0}}, ... {slots} entries], \"measurement_times\": [1, 2, 4]}}\n{times}",
            world.visible_count,
            visible_listing(world)
        ),
        Topology::SymmetricMultiBody if world.ring_input => format!(
            "The world contains {} particle(s) listed below plus {slots} ring particles that you place. \
             Ring particle k starts at angle 2πk/{slots} on a circle about the origin; you choose its \
             radius and its tangential (counter-clockwise) speed. All particles move. Data rows \
             report the listed particles first and then the ring particles in order.\n{}\
             Experiment format:\n\
             {{\"ring\": [{{\"radius\": 5.0, \"tangential_speed\": 0.5}}, ... {slots} entries], \"measurement_times\": [1, 2, 4]}}\n{times}",
            world.visible_count,
            visible_listing(world)
        ),
        Topology::SymmetricMultiBody => format!(
            "The world contains {} particle(s) listed below plus {slots} particles that you place. \
             All particles move. Data rows report the listed particles first and then yours in order.\n{}\
             Experiment format:\n\
             {{\"particles\": [{{\"position\": [x, y], \"velocity\": [vx, vy]}}, ... {slots} entries], \"measurement_times\": [1, 2, 4]}}\n{times}",
            world.visible_count,
            visible_listing(world)
        ),
    }
}

fn fit_tool_text() -> String {
    format!(
        "Besides experiments you may send a fit request with a candidate law. The law is an executable \
         package (files plus a command) that reads one JSON request per line on stdin and answers one \
         JSON line on stdout. Each request has \"scenario\" (\"bodies\" with position, velocity and \
         optional property, plus \"times\" or \"duration\" and \"start_time\") and \"params\"; the reply is \
         {{\"positions\": ...}} with one [x, y] per body per time. Declare at most {MAX_PARAMS} free \
         parameters, each with an init value and [lower, upper] bounds. The tool fits them to your \
         data by least squares and returns the report at the start of the next round. A fit request \
         uses one round. When you are done, send a finalize message with a short plain-text \
         explanation of the law and your final candidate law."
    )
}

/// Full prompt for the session's current round.
pub fn render_prompt(world: &WorldDefinition, session: &SessionState) -> String {
    let mut out = String::new();
    out.push_str(UNIVERSAL_PROMPT);
    out.push_str("\n\n");
    out.push_str(&interface_text(world));
    out.push_str("\n\n");
    out.push_str(&fit_tool_text());
    out.push_str("\n\n");
    if session.mode == super::Mode::Randomized {
        out.push_str(
            "In this session the initial conditions and measurement times of every experiment are \
             drawn at random by the simulator; the contents of your experiment messages are ignored.\n\n",
        );
    }
    if let Some(report) = &session.pending_fit_report {
        out.push_str("Fit report from your previous request:\n");
        out.push_str(report);
        out.push_str("\n\n");
    }
    let remaining = session.round_budget.saturating_sub(session.rounds_used);
    let round = session.rounds_used + 1;
    match remaining {
        0 => out.push_str(&format!(
            "All {} rounds are used. You must finalize now.",
            session.round_budget
        )),
        1 => out.push_str(&format!(
            "Round {round} of {}. This is your final round; after it you must finalize.",
            session.round_budget
        )),
        _ => out.push_str(&format!(
            "Round {round} of {}. {remaining} rounds remain.",
            session.round_budget
        )),
    }
    out
}
