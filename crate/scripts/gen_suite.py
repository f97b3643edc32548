#!/usr/bin/env python3
"""Generate the kitchen instruction suite.

Plans are built by walking a small copy of the simulator so that steps which
would be no-ops (finding an object the robot is already next to, going where
it already is) are left out. Every acceptable plan is replayed and must be
feasible at each step and satisfy the case goal; the script refuses to write
the suite otherwise.

Usage: gen_suite.py [OUT]   (default: crates/core/assets/kitchen_suite.json)
"""

import itertools
import json
import re
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
ASSETS = ROOT / "crates" / "core" / "assets"


def to_id(name):
    return re.sub(r"_+", "_", re.sub(r"[^0-9a-z]", "_", name.strip().lower())).strip("_")


SCENE = json.loads((ASSETS / "kitchen.json").read_text())
OBJECTS = {o["name"]: o for o in SCENE["objects"]}
USER = "user"


def article(name):
    a = OBJECTS[name].get("article")
    if a:
        return a
    return "an" if name[0].lower() in "aeiou" else "a"


class Sim:
    def __init__(self):
        self.robot = to_id(SCENE["start_location"])
        self.gripper = None
        self.place = {to_id(o["name"]): to_id(o["at"]) for o in SCENE["objects"]}

    def copy(self):
        s = Sim.__new__(Sim)
        s.robot, s.gripper, s.place = self.robot, self.gripper, dict(self.place)
        return s

    def obj_loc(self, o):
        p = self.place[o]
        return self.robot if p == "gripper" else p

    def step(self, label):
        """Apply a label; raise if infeasible or a no-op."""
        if label == "bring it to you":
            label = "go to the user"
        if m := re.fullmatch(r"find (?:a|an|some) (.+)", label):
            o = to_id(m[1])
            assert self.obj_loc(o) != self.robot, f"no-op {label}"
            self.robot = self.obj_loc(o)
        elif m := re.fullmatch(r"pick up the (.+)", label):
            o = to_id(m[1])
            assert self.gripper is None, f"gripper occupied: {label}"
            assert self.place[o] == self.robot, f"not here: {label}"
            self.place[o], self.gripper = "gripper", o
        elif m := re.fullmatch(r"go to the (.+)", label):
            loc = to_id(m[1])
            assert loc != self.robot, f"no-op {label}"
            self.robot = loc
        elif m := re.fullmatch(r"put down the (.+)", label):
            o = to_id(m[1])
            assert self.gripper == o, f"not holding: {label}"
            self.place[o], self.gripper = self.robot, None
        else:
            raise AssertionError(f"unknown label {label}")


def go_label(loc):
    return "bring it to you" if loc == USER else f"go to the {loc}"


class Planner:
    """Accumulates labels while tracking state, skipping no-ops."""

    def __init__(self, sim=None):
        self.sim = sim.copy() if sim else Sim()
        self.labels = []

    def do(self, label):
        self.sim.step(label)
        self.labels.append(label)
        return self

    def fetch(self, o):
        if self.sim.obj_loc(to_id(o)) != self.sim.robot:
            self.do(f"find {article(o)} {o}")
        return self.do(f"pick up the {o}")

    def goto(self, loc):
        if to_id(loc) != self.sim.robot:
            self.do(go_label(loc))
        return self

    def move(self, o, loc):
        return self.fetch(o).goto(loc).do(f"put down the {o}")

    def bring(self, o):
        return self.fetch(o).goto(USER)

    def bring_and_leave(self, o):
        return self.bring(o).do(f"put down the {o}")


def P(*steps, sim=None):
    """Build a plan from (verb, args...) steps."""
    p = Planner(sim)
    for verb, *args in steps:
        getattr(p, verb)(*args)
    return p.labels


def at(o, loc):
    return {"op": "object_at", "object": to_id(o), "location": to_id(loc)}


def placed(o, loc):
    return {"op": "placed_at", "object": to_id(o), "location": to_id(loc)}


def all_of(*g):
    return {"op": "all", "of": list(g)}


def any_of(*g):
    return {"op": "any", "of": list(g)}


def robot_at(loc):
    return {"op": "robot_at", "location": to_id(loc)}


def holding(o):
    return {"op": "holding", "object": to_id(o)}


def let_go(o):
    return all_of({"op": "gripper_empty"}, {"op": "placed_near_robot", "object": to_id(o)})


CASES = []


def case(family, text, plans, goal, setup=()):
    CASES.append(
        {
            "family": family,
            "text": text,
            "plans": plans,
            "goal": goal,
            "setup": list(setup),
        }
    )


def orders(*blocks):
    """Every ordering of independent plan blocks (each a list of steps)."""
    out = []
    for perm in itertools.permutations(blocks):
        out.append(P(*[s for b in perm for s in b]))
    return out


def setup_sim(setup):
    s = Sim()
    for l in setup:
        s.step(l)
    return s


SODAS = ["coke can", "redbull can", "lime soda", "pepsi can", "7up can"]
FRUIT = ["apple", "orange", "banana"]
CHIPS = ["jalapeno chips", "multigrain chips", "rice chips"]

# --- NL single primitive -------------------------------------------------
F = "nl_single_primitive"
for text, plan, goal in [
    ("Go to the table", ["go to the table"], robot_at("table")),
    ("Go to the far counter", ["go to the far counter"], robot_at("far counter")),
    ("Go to the trash", ["go to the trash"], robot_at("trash")),
    ("Go to the close counter", ["go to the close counter"], robot_at("close counter")),
    ("Come over to me", ["bring it to you"], robot_at(USER)),
    ("Find an apple", ["find an apple"], robot_at("table")),
    ("Find a coke can", ["find a coke can"], robot_at("far counter")),
    ("Find some tea", ["find some tea"], robot_at("close counter")),
    ("Find a sponge", ["find a sponge"], robot_at("table")),
]:
    case(F, text, [plan], goal)
for text, o in [
    ("Pick up the apple", "apple"),
    ("Pick up the sponge", "sponge"),
    ("Pick up the pepsi can", "pepsi can"),
]:
    case(F, text, [[f"pick up the {o}"]], holding(o), setup=[f"find {article(o)} {o}"])
for text, o in [
    ("Let go of the coke can", "coke can"),
    ("Put down the banana", "banana"),
    ("Release the energy bar", "energy bar"),
]:
    setup = [f"find {article(o)} {o}", f"pick up the {o}"]
    case(F, text, [[f"put down the {o}"]], let_go(o), setup=setup)

# --- NL nouns ---------------------------------------------------------------
F = "nl_nouns"


def bring_any(text, options):
    case(F, text, [P(("bring", o)) for o in options], any_of(*[at(o, USER) for o in options]))


bring_any("Bring me a fruit", FRUIT)
bring_any("Bring me a soda", SODAS)
bring_any("Bring me something to wipe a spill", ["sponge"])
bring_any("Bring me a bag of chips", CHIPS)
bring_any("Bring me a caffeinated drink", ["coke can", "redbull can", "pepsi can", "tea"])
bring_any("Bring me a citrus fruit", ["orange"])
bring_any("Bring me an energy drink", ["redbull can"])
bring_any("Bring me some water", ["water bottle"])
bring_any("Bring me a cola", ["coke can", "pepsi can"])
bring_any("Bring me a granola bar", ["energy bar"])
bring_any("Bring me a lemon-lime soda", ["lime soda", "7up can"])
bring_any("Bring me a yellow fruit", ["banana"])
case(F, "Put a soda on the table", [P(("move", o, "table")) for o in SODAS],
     any_of(*[placed(o, "table") for o in SODAS]))
case(F, "Put a snack on the close counter",
     [P(("move", o, "close counter")) for o in ["energy bar", "rice chips"]],
     any_of(placed("energy bar", "close counter"), placed("rice chips", "close counter")))
case(F, "Put the scrubber in the trash", [P(("move", "sponge", "trash"))], placed("sponge", "trash"))

# --- NL verbs and their structured mirrors --------------------------------------
PAIRS = [
    ("Restock the rice chips on the far counter", "Move the rice chips to the far counter.", "rice chips", "far counter"),
    ("Throw away the apple", "Move the apple to the trash.", "apple", "trash"),
    ("Hand me the coke can", "Bring the coke can to the user.", "coke can", USER),
    ("Stash the energy bar on the table", "Move the energy bar to the table.", "energy bar", "table"),
    ("Dispose of the 7up can", "Move the 7up can to the trash.", "7up can", "trash"),
    ("Fetch me the water bottle", "Bring the water bottle to the user.", "water bottle", USER),
    ("Relocate the banana to the close counter", "Move the banana to the close counter.", "banana", "close counter"),
    ("Toss the lime soda", "Move the lime soda to the trash.", "lime soda", "trash"),
    ("Carry the tea over to the far counter", "Move the tea to the far counter.", "tea", "far counter"),
    ("Grab me the orange", "Bring the orange to the user.", "orange", USER),
    ("Set the pepsi can on the table", "Move the pepsi can to the table.", "pepsi can", "table"),
    ("Discard the multigrain chips", "Move the multigrain chips to the trash.", "multigrain chips", "trash"),
    ("Deliver the sponge to me", "Bring the sponge to the user.", "sponge", USER),
    ("Return the redbull can to the close counter", "Move the redbull can to the close counter.", "redbull can", "close counter"),
    ("Clear the jalapeno chips off the counter and put them on the table", "Move the jalapeno chips to the table.", "jalapeno chips", "table"),
]
for verbs, structured, o, loc in PAIRS:
    if loc == USER:
        plan, goal = P(("bring", o)), at(o, USER)
    else:
        plan, goal = P(("move", o, loc)), placed(o, loc)
    case("nl_verbs", verbs, [plan], goal)
    case("structured_language", structured, [plan], goal)

# --- Embodiment: the task starts partway done -------------------------------
F = "embodiment"
STAGED = [
    ("Put the coke can on the close counter", ("move", "coke can", "close counter"), placed("coke can", "close counter"), 0),
    ("Put the pepsi can on the table", ("move", "pepsi can", "table"), placed("pepsi can", "table"), 1),
    ("Put the apple on the far counter", ("move", "apple", "far counter"), placed("apple", "far counter"), 2),
    ("Put the sponge on the close counter", ("move", "sponge", "close counter"), placed("sponge", "close counter"), 3),
    ("Put the rice chips on the far counter", ("move", "rice chips", "far counter"), placed("rice chips", "far counter"), 4),
    ("Put the water bottle on the table", ("move", "water bottle", "table"), placed("water bottle", "table"), 2),
    ("Put the orange in the trash", ("move", "orange", "trash"), placed("orange", "trash"), 3),
    ("Bring me the redbull can", ("bring", "redbull can"), at("redbull can", USER), 0),
    ("Bring me the banana", ("bring", "banana"), at("banana", USER), 1),
    ("Bring me the tea", ("bring", "tea"), at("tea", USER), 2),
    ("Bring me the energy bar", ("bring", "energy bar"), at("energy bar", USER), 3),
]
for text, step, goal, stage in STAGED:
    full = P(step)
    setup, rest = full[:stage], full[stage:]
    case(F, text, [rest], goal, setup=setup)

# --- Crowd-sourced phrasing ---------------------------------------------------
F = "crowd_sourced"
case(F, "Can I have a redbull please?", [P(("bring", "redbull can"))], at("redbull can", USER))
case(F, "I spilled my coke on the table, can you bring me something to clean it up?",
     [P(("bring", "sponge"))], at("sponge", USER))
case(F, "I'm hungry, could you get me some chips?", [P(("bring", c)) for c in CHIPS],
     any_of(*[at(c, USER) for c in CHIPS]))
case(F, "Someone left a water bottle on the far counter, can you throw it away?",
     [P(("move", "water bottle", "trash"))], placed("water bottle", "trash"))
case(F, "Move the chips bag from the table to the counter",
     [P(("move", "rice chips", l)) for l in ["far counter", "close counter"]],
     any_of(placed("rice chips", "far counter"), placed("rice chips", "close counter")))
sweet = ["energy bar", "apple", "orange", "banana"]
case(F, "I would like something sweet to eat", [P(("bring", o)) for o in sweet],
     any_of(*[at(o, USER) for o in sweet]))
case(F, "Please clean up the orange on the table by throwing it away",
     [P(("move", "orange", "trash"))], placed("orange", "trash"))
decaf = ["water bottle", "lime soda", "7up can"]
case(F, "Could you bring me a drink without caffeine?", [P(("bring", o)) for o in decaf],
     any_of(*[at(o, USER) for o in decaf]))
case(F, "The tea should be on the table, not the counter", [P(("move", "tea", "table"))],
     placed("tea", "table"))
case(F, "Can you get me a Pepsi?", [P(("bring", "pepsi can"))], at("pepsi can", USER))
case(F, "I need to wipe the counter, hand me the sponge", [P(("bring", "sponge"))], at("sponge", USER))
case(F, "Get rid of the empty 7up can", [P(("move", "7up can", "trash"))], placed("7up can", "trash"))
case(F, "Can you put the banana somewhere I can reach it?", [P(("bring", "banana"))], at("banana", USER))
case(F, "Take the energy bar to the table for me", [P(("move", "energy bar", "table"))],
     placed("energy bar", "table"))
case(F, "I'd love a cold coke", [P(("bring", "coke can"))], at("coke can", USER))

# --- Long-horizon -----------------------------------------------------------
F = "long_horizon"
case(F, "Bring me a sponge and throw away the coke can",
     orders([("bring_and_leave", "sponge")], [("move", "coke can", "trash")])
     # Finishing with the sponge in hand at the user is also fine.
     [:1] + [P(("move", "coke can", "trash"), ("bring", "sponge"))],
     all_of(at("sponge", USER), placed("coke can", "trash")))
case(F, "Bring me a coke can and an apple",
     [P(("bring_and_leave", a), ("bring", b)) for a, b in [("coke can", "apple"), ("apple", "coke can")]],
     all_of(at("coke can", USER), at("apple", USER)))
case(F, "Throw away the apple and the orange",
     orders([("move", "apple", "trash")], [("move", "orange", "trash")]),
     all_of(placed("apple", "trash"), placed("orange", "trash")))
case(F, "Put the rice chips and the banana on the far counter",
     orders([("move", "rice chips", "far counter")], [("move", "banana", "far counter")]),
     all_of(placed("rice chips", "far counter"), placed("banana", "far counter")))
case(F, "Clear the table by moving the sponge to the close counter and throwing away the banana",
     orders([("move", "sponge", "close counter")], [("move", "banana", "trash")]),
     all_of(placed("sponge", "close counter"), placed("banana", "trash")))
case(F, "Move the coke can to the table, then bring me the apple",
     [P(("move", "coke can", "table"), ("bring", "apple"))],
     all_of(placed("coke can", "table"), at("apple", USER)))
case(F, "Throw away the coke can, the pepsi can and the 7up can",
     orders(*[[("move", o, "trash")] for o in ["coke can", "pepsi can", "7up can"]]),
     all_of(*[placed(o, "trash") for o in ["coke can", "pepsi can", "7up can"]]))
case(F, "Swap the places of the apple and the tea",
     orders([("move", "apple", "close counter")], [("move", "tea", "table")]),
     all_of(placed("apple", "close counter"), placed("tea", "table")))
case(F, "Put all the fruit on the close counter",
     orders(*[[("move", o, "close counter")] for o in FRUIT]),
     all_of(*[placed(o, "close counter") for o in FRUIT]))
case(F, "Bring me the water bottle, then throw away the lime soda",
     [P(("bring_and_leave", "water bottle"), ("move", "lime soda", "trash"))],
     all_of(at("water bottle", USER), placed("lime soda", "trash")))
case(F, "Restock the jalapeno chips and the multigrain chips on the table",
     orders([("move", "jalapeno chips", "table")], [("move", "multigrain chips", "table")]),
     all_of(placed("jalapeno chips", "table"), placed("multigrain chips", "table")))
case(F, "Bring the energy bar and the banana to me",
     [P(("bring_and_leave", a), ("bring", b)) for a, b in [("energy bar", "banana"), ("banana", "energy bar")]],
     all_of(at("energy bar", USER), at("banana", USER)))
case(F, "Throw away the sponge and bring me the orange",
     [P(("move", "sponge", "trash"), ("bring", "orange")),
      P(("bring_and_leave", "orange"), ("move", "sponge", "trash"))],
     all_of(placed("sponge", "trash"), at("orange", USER)))
case(F, "Move the redbull can to the close counter and the pepsi can to the far counter",
     orders([("move", "redbull can", "close counter")], [("move", "pepsi can", "far counter")]),
     all_of(placed("redbull can", "close counter"), placed("pepsi can", "far counter")))
case(F, "Put the coke can on the table and the apple on the far counter",
     orders([("move", "coke can", "table")], [("move", "apple", "far counter")]),
     all_of(placed("coke can", "table"), placed("apple", "far counter")))


def holds(goal, s):
    op = goal["op"]
    if op == "all":
        return all(holds(g, s) for g in goal["of"])
    if op == "any":
        return any(holds(g, s) for g in goal["of"])
    if op == "object_at":
        return s.obj_loc(goal["object"]) == goal["location"]
    if op == "placed_at":
        return s.place[goal["object"]] == goal["location"]
    if op == "placed_near_robot":
        return s.place[goal["object"]] == s.robot
    if op == "holding":
        return s.gripper == goal["object"]
    if op == "gripper_empty":
        return s.gripper is None
    if op == "robot_at":
        return s.robot == goal["location"]
    raise AssertionError(op)


EXPECTED = {
    "nl_single_primitive": 15,
    "nl_nouns": 15,
    "nl_verbs": 15,
    "structured_language": 15,
    "embodiment": 11,
    "crowd_sourced": 15,
    "long_horizon": 15,
}


def main():
    out_path = Path(sys.argv[1]) if len(sys.argv) > 1 else ASSETS / "kitchen_suite.json"
    counts = {}
    seen = set()
    suite = []
    for c in CASES:
        fam = c["family"]
        counts[fam] = counts.get(fam, 0) + 1
        assert c["text"] not in seen, f"duplicate instruction {c['text']}"
        seen.add(c["text"])
        start = setup_sim(c["setup"])
        empty_ok = [] in c["plans"]
        assert holds(c["goal"], start) == empty_ok, f"{c['text']}: goal holds at start"
        for plan in c["plans"]:
            s = start.copy()
            for label in plan:
                s.step(label)
            assert holds(c["goal"], s), f"{c['text']}: plan {plan} misses goal"
        entry = {
            "id": f"{fam}-{counts[fam]:02d}",
            "instruction": {"text": c["text"]},
            "family": fam,
            "acceptable_plans": c["plans"],
            "goal": c["goal"],
            "scenario": "kitchen",
        }
        if c["setup"]:
            entry["setup"] = c["setup"]
        suite.append(entry)
    assert counts == EXPECTED, counts
    assert len(suite) == 101
    out_path.write_text(json.dumps(suite, indent=1) + "\n")
    print(f"wrote {len(suite)} cases to {out_path}")


if __name__ == "__main__":
    main()
