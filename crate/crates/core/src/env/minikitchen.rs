//! A single-room kitchen with attribute tasks ("put a chilled lettuce on
//! counter1"), door appliances, and optional synonym rendering in
//! observations, which is what makes ontological grounding earn its keep.

use super::Environment;
use crate::memory::pattern::Bindings;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

pub const PLACES: &[&str] = &["counter1", "counter2", "table1", "shelf1"];
pub const APPLIANCES: &[&str] = &["fridge1", "microwave1", "sink1"];
pub const OBJECTS: &[&str] = &["lettuce", "apple", "potato", "tomato", "mug", "plate"];
const DOOR_APPLIANCES: &[&str] = &["fridge1", "microwave1"];

/// Surface variants used when an episode renders synonyms.
const SURFACE: &[(&str, &str)] = &[
    ("lettuce", "greens"),
    ("mug", "cup"),
    ("potato", "spud"),
    ("plate", "dish"),
    ("fridge1", "refrigerator"),
];

/// Attribute phases a task can demand before placement.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Cool,
    Heat,
    Clean,
}

impl Phase {
    pub fn verb(self) -> &'static str {
        match self {
            Phase::Cool => "cool",
            Phase::Heat => "heat",
            Phase::Clean => "clean",
        }
    }

    pub fn attr(self) -> &'static str {
        match self {
            Phase::Cool => "cooled",
            Phase::Heat => "heated",
            Phase::Clean => "cleaned",
        }
    }

    pub fn appliance(self) -> &'static str {
        match self {
            Phase::Cool => "fridge1",
            Phase::Heat => "microwave1",
            Phase::Clean => "sink1",
        }
    }

    /// The adjective used in task instructions.
    pub fn modifier_word(self) -> &'static str {
        match self {
            Phase::Cool => "chilled",
            Phase::Heat => "hot",
            Phase::Clean => "clean",
        }
    }

    pub fn label(self) -> &'static str {
        self.verb()
    }

    fn from_modifier(word: &str) -> Option<Self> {
        match word {
            "chilled" => Some(Phase::Cool),
            "hot" => Some(Phase::Heat),
            "clean" => Some(Phase::Clean),
            _ => None,
        }
    }
}

/// A concrete task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TaskSpec {
    Put {
        modifier: Option<Phase>,
        object: String,
        location: String,
    },
    Examine { object: String },
}

impl TaskSpec {
    pub fn instruction(&self) -> String {
        match self {
            TaskSpec::Put {
                modifier: Some(m),
                object,
                location,
            } => format!("put a {} {object} on {location}", m.modifier_word()),
            TaskSpec::Put {
                modifier: None,
                object,
                location,
            } => format!("put the {object} on {location}"),
            TaskSpec::Examine { object } => format!("examine the {object}"),
        }
    }

    /// Parses an instruction in the environment's own grammar.
    pub fn parse(text: &str) -> Option<Self> {
        let tokens: Vec<String> = crate::text::tokenize(text)
            .into_iter()
            .filter(|t| !matches!(t.as_str(), "a" | "an" | "the"))
            .collect();
        let pos = tokens.iter().position(|t| t == "put" || t == "examine")?;
        if tokens[pos] == "examine" {
            let object = tokens.get(pos + 1)?.clone();
            return OBJECTS
                .contains(&object.as_str())
                .then_some(TaskSpec::Examine { object });
        }
        let mut i = pos + 1;
        let modifier = Phase::from_modifier(tokens.get(i)?);
        if modifier.is_some() {
            i += 1;
        }
        let object = tokens.get(i)?.clone();
        if tokens.get(i + 1).map(String::as_str) != Some("on") {
            return None;
        }
        let location = tokens.get(i + 2)?.clone();
        (OBJECTS.contains(&object.as_str()) && PLACES.contains(&location.as_str())).then_some(
            TaskSpec::Put {
                modifier,
                object,
                location,
            },
        )
    }

    pub fn object(&self) -> &str {
        match self {
            TaskSpec::Put { object, .. } | TaskSpec::Examine { object } => object,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Action {
    Go(String),
    Take(String),
    Put(String, String),
    Open(String),
    Close(String),
    Treat(Phase, String, String),
    Examine(String),
    Invalid,
}

fn parse_action(action: &str) -> Action {
    let t = crate::text::tokenize(action);
    let s: Vec<&str> = t.iter().map(String::as_str).collect();
    match s.as_slice() {
        ["go", "to", x] => Action::Go(x.to_string()),
        ["take", o] => Action::Take(o.to_string()),
        ["put", o, "on", l] => Action::Put(o.to_string(), l.to_string()),
        ["open", a] => Action::Open(a.to_string()),
        ["close", a] => Action::Close(a.to_string()),
        ["cool", o, "with", a] => Action::Treat(Phase::Cool, o.to_string(), a.to_string()),
        ["heat", o, "with", a] => Action::Treat(Phase::Heat, o.to_string(), a.to_string()),
        ["clean", o, "with", a] => Action::Treat(Phase::Clean, o.to_string(), a.to_string()),
        ["examine", o] => Action::Examine(o.to_string()),
        _ => Action::Invalid,
    }
}

pub struct MiniKitchen {
    /// Probability that an episode renders surface synonyms in observations.
    p_syn: f64,
    task: TaskSpec,
    task_text: String,
    agent_at: String,
    holding: Option<String>,
    object_loc: BTreeMap<String, String>,
    attrs: BTreeMap<&'static str, BTreeSet<String>>, // attr name -> objects
    examined: BTreeSet<String>,
    ever_held: BTreeSet<String>,
    doors_open: BTreeMap<String, bool>,
    use_synonyms: bool,
    last_label: Option<String>,
    last_ineffective: bool,
    succeeded: bool,
}

impl MiniKitchen {
    pub fn new(p_syn: f64) -> Self {
        let mut env = Self {
            p_syn,
            task: TaskSpec::Examine {
                object: "mug".into(),
            },
            task_text: String::new(),
            agent_at: "counter1".into(),
            holding: None,
            object_loc: BTreeMap::new(),
            attrs: BTreeMap::new(),
            examined: BTreeSet::new(),
            ever_held: BTreeSet::new(),
            doors_open: BTreeMap::new(),
            use_synonyms: false,
            last_label: None,
            last_ineffective: false,
            succeeded: false,
        };
        env.init_state(&mut ChaCha8Rng::seed_from_u64(0));
        env
    }

    fn init_state(&mut self, rng: &mut ChaCha8Rng) {
        self.agent_at = "counter1".into();
        self.holding = None;
        self.object_loc = OBJECTS
            .iter()
            .map(|o| {
                (
                    o.to_string(),
                    PLACES[rng.random_range(0..PLACES.len())].to_string(),
                )
            })
            .collect();
        self.attrs = [("cooled", BTreeSet::new()), ("heated", BTreeSet::new()), ("cleaned", BTreeSet::new())]
            .into_iter()
            .collect();
        self.examined.clear();
        self.ever_held.clear();
        self.doors_open = DOOR_APPLIANCES
            .iter()
            .map(|a| (a.to_string(), false))
            .collect();
        self.last_label = None;
        self.last_ineffective = false;
        self.succeeded = false;
    }

    /// Starts an episode with an explicit task (used for fixed traces).
    pub fn reset_with(&mut self, task: TaskSpec, episode_seed: u64, use_synonyms: bool) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(episode_seed);
        self.init_state(&mut rng);
        self.use_synonyms = use_synonyms;
        self.task_text = task.instruction();
        self.enforce_navigation(&task);
        self.task = task;
        self.observe()
    }

    /// Guarantees the task is not already satisfied at reset and always
    /// requires navigation: the task object never spawns at the agent's
    /// start position nor at the target location.
    fn enforce_navigation(&mut self, task: &TaskSpec) {
        let (object, target) = match task {
            TaskSpec::Put {
                object, location, ..
            } => (object.clone(), Some(location.clone())),
            TaskSpec::Examine { object } => (object.clone(), None),
        };
        let agent_at = self.agent_at.clone();
        let blocked = |p: &str| p == agent_at || target.as_deref() == Some(p);
        if self.object_loc.get(&object).is_some_and(|p| blocked(p)) {
            let alt = PLACES
                .iter()
                .find(|p| !blocked(p))
                .expect("more than two places");
            self.object_loc.insert(object, alt.to_string());
        }
    }

    fn attr_set(&self, attr: &str) -> &BTreeSet<String> {
        &self.attrs[attr]
    }

    fn has_attr(&self, attr: &str, object: &str) -> bool {
        self.attr_set(attr).contains(object)
    }

    fn render<'a>(&self, name: &'a str) -> &'a str {
        if self.use_synonyms {
            SURFACE
                .iter()
                .find(|(canon, _)| *canon == name)
                .map(|(_, alt)| *alt)
                .unwrap_or(name)
        } else {
            name
        }
    }

    fn observe(&self) -> String {
        let mut s = String::new();
        if self.last_ineffective {
            s.push_str("nothing happens. ");
        }
        s.push_str(&format!("your task is to: {}. ", self.task_text));
        s.push_str(&format!("you are at {}. ", self.render(&self.agent_at)));
        match &self.holding {
            Some(o) => s.push_str(&format!("you are holding the {}. ", self.render(o))),
            None => s.push_str("you are holding nothing. "),
        }
        for (o, loc) in &self.object_loc {
            s.push_str(&format!(
                "the {} is on {}. ",
                self.render(o),
                self.render(loc)
            ));
        }
        for (attr, set) in &self.attrs {
            for o in set {
                s.push_str(&format!("the {} is {attr}. ", self.render(o)));
            }
        }
        for o in &self.examined {
            s.push_str(&format!("you examined the {}. ", self.render(o)));
        }
        for (a, open) in &self.doors_open {
            s.push_str(&format!(
                "the {} is {}. ",
                self.render(a),
                if *open { "open" } else { "closed" }
            ));
        }
        s.trim_end().to_string()
    }

    fn location_of(&self, object: &str) -> Option<&str> {
        self.object_loc.get(object).map(String::as_str)
    }

    fn is_place_or_appliance(x: &str) -> bool {
        PLACES.contains(&x) || APPLIANCES.contains(&x)
    }

    /// Applies the action; returns (effective, label-if-effective).
    fn apply(&mut self, action: &Action) -> bool {
        match action {
            Action::Go(x) => {
                let dest = if Self::is_place_or_appliance(x) {
                    Some(x.to_string())
                } else {
                    self.location_of(x).map(str::to_string)
                };
                // Going where you already stand is a harmless no-op, not a
                // failure; only unreachable destinations are ineffective.
                match dest {
                    Some(d) => {
                        self.agent_at = d;
                        true
                    }
                    None => false,
                }
            }
            Action::Take(o) => {
                if self.holding.is_none() && self.location_of(o) == Some(self.agent_at.as_str()) {
                    self.object_loc.remove(o);
                    self.holding = Some(o.clone());
                    self.ever_held.insert(o.clone());
                    true
                } else {
                    false
                }
            }
            Action::Put(o, l) => {
                if self.holding.as_deref() == Some(o.as_str())
                    && self.agent_at == *l
                    && PLACES.contains(&l.as_str())
                {
                    self.holding = None;
                    self.object_loc.insert(o.clone(), l.clone());
                    true
                } else {
                    false
                }
            }
            // Opening an open door (or closing a closed one) is a harmless
            // no-op: plans replayed from a different door state should not
            // abort on it.
            Action::Open(a) => {
                if self.agent_at == *a && self.doors_open.contains_key(a) {
                    self.doors_open.insert(a.clone(), true);
                    true
                } else {
                    false
                }
            }
            Action::Close(a) => {
                if self.agent_at == *a && self.doors_open.contains_key(a) {
                    self.doors_open.insert(a.clone(), false);
                    true
                } else {
                    false
                }
            }
            Action::Treat(phase, o, a) => {
                let needs_door = DOOR_APPLIANCES.contains(&a.as_str());
                let door_ok = !needs_door || self.doors_open.get(a) == Some(&true);
                if *a == phase.appliance()
                    && self.agent_at == *a
                    && self.holding.as_deref() == Some(o.as_str())
                    && door_ok
                    && !self.has_attr(phase.attr(), o)
                {
                    self.attrs.get_mut(phase.attr()).unwrap().insert(o.clone());
                    // heating and cooling cancel each other
                    match phase {
                        Phase::Cool => {
                            self.attrs.get_mut("heated").unwrap().remove(o);
                        }
                        Phase::Heat => {
                            self.attrs.get_mut("cooled").unwrap().remove(o);
                        }
                        Phase::Clean => {}
                    }
                    true
                } else {
                    false
                }
            }
            Action::Examine(o) => {
                let reachable = self.holding.as_deref() == Some(o.as_str())
                    || self.location_of(o) == Some(self.agent_at.as_str());
                if reachable && !self.examined.contains(o) {
                    self.examined.insert(o.clone());
                    true
                } else {
                    false
                }
            }
            Action::Invalid => false,
        }
    }

    /// Phase label of an effective action, "noise" when it does not advance
    /// the task.
    fn label_of(&self, action: &Action) -> String {
        let noise = "noise".to_string();
        match (&self.task, action) {
            (TaskSpec::Examine { object }, Action::Go(x)) if x == object => "examine".into(),
            (TaskSpec::Examine { object }, Action::Examine(o)) if o == object => "examine".into(),
            (TaskSpec::Put { object, .. }, Action::Go(x)) if x == object => "acquire".into(),
            (TaskSpec::Put { object, .. }, Action::Take(o)) if o == object => "acquire".into(),
            (
                TaskSpec::Put {
                    modifier: Some(m), ..
                },
                Action::Go(x),
            ) if x == m.appliance() => m.label().into(),
            (
                TaskSpec::Put {
                    modifier: Some(m), ..
                },
                Action::Open(a) | Action::Close(a),
            ) if a == m.appliance() => m.label().into(),
            (
                TaskSpec::Put {
                    modifier: Some(m),
                    object,
                    ..
                },
                Action::Treat(phase, o, _),
            ) if phase == m && o == object => m.label().into(),
            (TaskSpec::Put { location, .. }, Action::Go(x)) if x == location => "place".into(),
            (
                TaskSpec::Put {
                    object, location, ..
                },
                Action::Put(o, l),
            ) if o == object && l == location => "place".into(),
            _ => noise,
        }
    }

    fn success(&self) -> bool {
        match &self.task {
            TaskSpec::Put {
                modifier,
                object,
                location,
            } => {
                let placed = self.location_of(object) == Some(location.as_str());
                let treated = modifier
                    .map(|m| self.has_attr(m.attr(), object))
                    .unwrap_or(true);
                placed && treated
            }
            TaskSpec::Examine { object } => self.examined.contains(object),
        }
    }
}

impl Environment for MiniKitchen {
    fn reset(&mut self, episode_seed: u64) -> String {
        let mut rng = ChaCha8Rng::seed_from_u64(episode_seed);
        self.init_state(&mut rng);
        self.use_synonyms = rng.random::<f64>() < self.p_syn;
        let object = OBJECTS[rng.random_range(0..OBJECTS.len())].to_string();
        let task = match rng.random_range(0..5) {
            0 => TaskSpec::Examine { object },
            k => {
                let modifier = match k {
                    1 => Some(Phase::Cool),
                    2 => Some(Phase::Heat),
                    3 => Some(Phase::Clean),
                    _ => None,
                };
                let source = self.object_loc[&object].clone();
                let candidates: Vec<&&str> =
                    PLACES.iter().filter(|p| **p != source).collect();
                let location = candidates[rng.random_range(0..candidates.len())].to_string();
                TaskSpec::Put {
                    modifier,
                    object,
                    location,
                }
            }
        };
        self.task_text = task.instruction();
        self.enforce_navigation(&task);
        self.task = task;
        self.observe()
    }

    fn task(&self) -> &str {
        &self.task_text
    }

    fn step(&mut self, action: &str) -> (String, f64, bool) {
        let parsed = parse_action(action);
        let effective = self.apply(&parsed);
        self.last_ineffective = !effective;
        self.last_label = Some(if effective {
            self.label_of(&parsed)
        } else {
            "noise".to_string()
        });
        let newly_succeeded = !self.succeeded && self.success();
        if newly_succeeded {
            self.succeeded = true;
        }
        let reward = if newly_succeeded { 1.0 } else { 0.0 };
        (self.observe(), reward, self.succeeded)
    }

    fn legal_actions(&self) -> Vec<String> {
        let mut actions = Vec::new();
        for x in PLACES.iter().chain(APPLIANCES).chain(OBJECTS) {
            actions.push(format!("go to {x}"));
        }
        for o in OBJECTS {
            actions.push(format!("take {o}"));
            actions.push(format!("examine {o}"));
        }
        for a in DOOR_APPLIANCES {
            actions.push(format!("open {a}"));
            actions.push(format!("close {a}"));
        }
        if let Some(held) = &self.holding {
            for p in PLACES {
                actions.push(format!("put {held} on {p}"));
            }
            for phase in [Phase::Cool, Phase::Heat, Phase::Clean] {
                actions.push(format!("{} {held} with {}", phase.verb(), phase.appliance()));
            }
        }
        actions
    }

    fn oracle_action(&self) -> Option<String> {
        if self.success() {
            return None;
        }
        match &self.task {
            TaskSpec::Examine { object } => {
                let reachable = self.holding.as_deref() == Some(object.as_str())
                    || self.location_of(object) == Some(self.agent_at.as_str());
                if reachable {
                    Some(format!("examine {object}"))
                } else {
                    Some(format!("go to {object}"))
                }
            }
            TaskSpec::Put {
                modifier,
                object,
                location,
            } => {
                // Hands must be free for the task object; stash anything else.
                if let Some(held) = &self.holding {
                    if held != object {
                        return if PLACES.contains(&self.agent_at.as_str()) {
                            Some(format!("put {held} on {}", self.agent_at))
                        } else {
                            Some("go to counter1".to_string())
                        };
                    }
                }
                // Treatment phase first, if demanded and pending.
                if let Some(m) = modifier {
                    if !self.has_attr(m.attr(), object) {
                        if self.holding.as_deref() != Some(object.as_str()) {
                            return if self.location_of(object)
                                == Some(self.agent_at.as_str())
                            {
                                Some(format!("take {object}"))
                            } else {
                                Some(format!("go to {object}"))
                            };
                        }
                        let app = m.appliance();
                        if self.agent_at != app {
                            return Some(format!("go to {app}"));
                        }
                        if DOOR_APPLIANCES.contains(&app)
                            && self.doors_open.get(app) == Some(&false)
                        {
                            return Some(format!("open {app}"));
                        }
                        return Some(format!("{} {object} with {app}", m.verb()));
                    }
                    // Tidy up: close the door we opened.
                    let app = m.appliance();
                    if DOOR_APPLIANCES.contains(&app) && self.doors_open.get(app) == Some(&true) {
                        if self.agent_at == app {
                            return Some(format!("close {app}"));
                        }
                    }
                }
                if self.holding.as_deref() != Some(object.as_str()) {
                    return if self.location_of(object) == Some(self.agent_at.as_str()) {
                        Some(format!("take {object}"))
                    } else {
                        Some(format!("go to {object}"))
                    };
                }
                if self.agent_at != *location {
                    return Some(format!("go to {location}"));
                }
                Some(format!("put {object} on {location}"))
            }
        }
    }

    fn last_label(&self) -> Option<&str> {
        self.last_label.as_deref()
    }

    fn bindings(&self) -> Bindings {
        let mut b = Bindings::new();
        match &self.task {
            TaskSpec::Put {
                modifier,
                object,
                location,
            } => {
                b.insert("<object>".into(), object.clone());
                b.insert("<location>".into(), location.clone());
                if let Some(m) = modifier {
                    b.insert("<appliance>".into(), m.appliance().to_string());
                }
            }
            TaskSpec::Examine { object } => {
                b.insert("<object>".into(), object.clone());
            }
        }
        b
    }

    fn phase_completed(&self, label: &str) -> bool {
        let object = self.task.object();
        match label {
            "acquire" => self.ever_held.contains(object),
            "cool" => self.has_attr("cooled", object),
            "heat" => self.has_attr("heated", object),
            "clean" => self.has_attr("cleaned", object),
            "place" => match &self.task {
                TaskSpec::Put { location, .. } => {
                    self.location_of(object) == Some(location.as_str())
                }
                _ => false,
            },
            "examine" => self.examined.contains(object),
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chilled_env() -> MiniKitchen {
        let mut env = MiniKitchen::new(0.0);
        env.reset_with(
            TaskSpec::Put {
                modifier: Some(Phase::Cool),
                object: "lettuce".into(),
                location: "counter1".into(),
            },
            42,
            false,
        );
        env
    }

    #[test]
    fn oracle_solves_chilled_task() {
        let mut env = chilled_env();
        let mut actions = Vec::new();
        for _ in 0..30 {
            let Some(a) = env.oracle_action() else { break };
            let (_, reward, done) = env.step(&a);
            assert_eq!(env.last_label(), Some(env.last_label().unwrap()));
            assert_ne!(env.last_label(), Some("noise"), "oracle step {a} was noise");
            actions.push(a);
            if done {
                assert_eq!(reward, 1.0);
                break;
            }
        }
        assert!(env.success(), "actions: {actions:?}");
        // go obj, take, go fridge, open, cool, close, go loc, put = 8
        assert_eq!(actions.len(), 8, "{actions:?}");
        let verbs: Vec<&str> = actions.iter().map(|a| a.split(' ').next().unwrap()).collect();
        assert_eq!(verbs.iter().filter(|v| **v == "go").count(), 3);
        for v in ["take", "open", "cool", "close", "put"] {
            assert_eq!(verbs.iter().filter(|x| **x == v).count(), 1, "{v}");
        }
    }

    #[test]
    fn oracle_solves_every_seeded_task() {
        let mut env = MiniKitchen::new(0.3);
        for seed in 0..200 {
            env.reset(seed);
            let mut done = false;
            for _ in 0..30 {
                let Some(a) = env.oracle_action() else { break };
                let (_, _, d) = env.step(&a);
                if d {
                    done = true;
                    break;
                }
            }
            assert!(done, "seed {seed}: task {:?} unsolved", env.task());
        }
    }

    #[test]
    fn ineffective_actions_say_nothing_happens() {
        let mut env = chilled_env();
        let (obs, reward, done) = env.step("take plate"); // not at plate's spot necessarily
        // either it worked (plate was here) or the obs flags it; force one:
        let (obs2, ..) = env.step("open sink1"); // sink has no door: always ineffective
        assert!(obs2.starts_with("nothing happens."), "{obs2}");
        assert_eq!(env.last_label(), Some("noise"));
        let _ = (obs, reward, done);
    }

    #[test]
    fn treat_requires_open_door_and_held_object() {
        let mut env = chilled_env();
        env.step("go to lettuce");
        env.step("take lettuce");
        env.step("go to fridge1");
        // door closed: cooling is ineffective
        let (obs, ..) = env.step("cool lettuce with fridge1");
        assert!(obs.starts_with("nothing happens."));
        env.step("open fridge1");
        let (obs, ..) = env.step("cool lettuce with fridge1");
        assert!(obs.contains("the lettuce is cooled"), "{obs}");
        assert_eq!(env.last_label(), Some("cool"));
        assert!(env.phase_completed("cool"));
    }

    #[test]
    fn labels_track_phases() {
        let mut env = chilled_env();
        env.step("go to lettuce");
        assert_eq!(env.last_label(), Some("acquire"));
        env.step("take lettuce");
        assert_eq!(env.last_label(), Some("acquire"));
        env.step("go to fridge1");
        assert_eq!(env.last_label(), Some("cool"));
        env.step("go to counter2"); // effective but off-task
        assert_eq!(env.last_label(), Some("noise"));
    }

    #[test]
    fn synonym_rendering_only_touches_observations() {
        let mut env = MiniKitchen::new(0.0);
        let obs = env.reset_with(
            TaskSpec::Put {
                modifier: Some(Phase::Cool),
                object: "lettuce".into(),
                location: "counter1".into(),
            },
            42,
            true,
        );
        assert!(obs.contains("greens"), "{obs}");
        assert!(!obs.contains("the lettuce is on"), "{obs}");
        // task text stays canonical
        assert!(obs.contains("put a chilled lettuce on counter1"), "{obs}");
        // canonical actions still work
        env.step("go to lettuce");
        let (obs, ..) = env.step("take lettuce");
        assert!(obs.contains("holding the greens"), "{obs}");
    }

    #[test]
    fn task_parse_roundtrip() {
        for spec in [
            TaskSpec::Put {
                modifier: Some(Phase::Heat),
                object: "potato".into(),
                location: "table1".into(),
            },
            TaskSpec::Put {
                modifier: None,
                object: "mug".into(),
                location: "shelf1".into(),
            },
            TaskSpec::Examine {
                object: "apple".into(),
            },
        ] {
            assert_eq!(TaskSpec::parse(&spec.instruction()), Some(spec));
        }
        assert_eq!(TaskSpec::parse("juggle the plates"), None);
    }

    #[test]
    fn reset_is_deterministic_and_never_presolved() {
        let mut a = MiniKitchen::new(0.3);
        let mut b = MiniKitchen::new(0.3);
        for seed in 0..50 {
            assert_eq!(a.reset(seed), b.reset(seed));
            assert!(!a.success(), "seed {seed} spawned solved");
        }
    }

    #[test]
    fn bindings_cover_task_entities() {
        let env = chilled_env();
        let b = env.bindings();
        assert_eq!(b["<object>"], "lettuce");
        assert_eq!(b["<location>"], "counter1");
        assert_eq!(b["<appliance>"], "fridge1");
    }

    #[test]
    fn legal_actions_contain_oracle_action() {
        let mut env = MiniKitchen::new(0.0);
        for seed in 0..20 {
            env.reset(seed);
            for _ in 0..30 {
                let Some(a) = env.oracle_action() else { break };
                assert!(env.legal_actions().contains(&a), "{a}");
                if env.step(&a).2 {
                    break;
                }
            }
        }
    }
}
