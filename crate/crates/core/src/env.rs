//! Procedurally generated contextual gridworlds.
//!
//! A context is a seed; the layout is a pure function of `(context, config)`.
//! Observations expose a symbolic grid, the agent position, a time counter,
//! an event message code and optional per-step noise, so count keys can be
//! built from any subset of channels.
//!
//! Spec strings: `multiroom-r<R>-s<side>[-open][-noise<k>][-timer][-lava<k>][-t<T>]`
//! and `keyuse-s<side>[-timer][-noise<k>][-lava<k>][-t<T>]`.

use std::collections::VecDeque;
use std::fmt;

use crate::error::{invalid, Error, Result};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Cell {
    Wall = 0,
    Floor = 1,
    Lava = 2,
    DoorClosed = 3,
    DoorOpen = 4,
    Key = 5,
    Goal = 6,
}

pub const NUM_CELL_TAGS: usize = 7;

impl Cell {
    fn walkable(self) -> bool {
        matches!(self, Cell::Floor | Cell::DoorOpen | Cell::Goal | Cell::Lava)
    }

    pub fn symbol(self) -> char {
        match self {
            Cell::Wall => '#',
            Cell::Floor => '.',
            Cell::Lava => '~',
            Cell::DoorClosed => '+',
            Cell::DoorOpen => '-',
            Cell::Key => 'k',
            Cell::Goal => 'G',
        }
    }
}

pub const MSG_NONE: u8 = 0;
pub const MSG_KEY_PICKED: u8 = 1;
pub const MSG_DOOR_OPENED: u8 = 2;
pub const MSG_DOOR_LOCKED: u8 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Up,
    Down,
    Left,
    Right,
    Interact,
}

pub const NUM_ACTIONS: usize = 5;

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [Action::Up, Action::Down, Action::Left, Action::Right, Action::Interact];

    pub fn from_index(i: usize) -> Result<Self> {
        Self::ALL
            .get(i)
            .copied()
            .ok_or_else(|| invalid(format!("action index {i} out of range")))
    }

    pub fn index(self) -> usize {
        self as usize
    }

    fn delta(self) -> (isize, isize) {
        match self {
            Action::Up => (0, -1),
            Action::Down => (0, 1),
            Action::Left => (-1, 0),
            Action::Right => (1, 0),
            Action::Interact => (0, 0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Task {
    MultiRoom,
    KeyUse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Context {
    pub seed: u64,
    pub task: Task,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnvConfig {
    pub task: Task,
    pub side: usize,
    pub rooms: usize,
    pub max_steps: u32,
    pub noise_dims: usize,
    pub timer: bool,
    pub doors_open: bool,
    pub lava: usize,
}

impl EnvConfig {
    pub fn multiroom(rooms: usize, side: usize) -> Self {
        Self {
            task: Task::MultiRoom,
            side,
            rooms,
            max_steps: default_max_steps(Task::MultiRoom, side, rooms),
            noise_dims: 0,
            timer: false,
            doors_open: false,
            lava: 0,
        }
    }

    pub fn keyuse(side: usize) -> Self {
        Self {
            task: Task::KeyUse,
            side,
            rooms: 2,
            max_steps: default_max_steps(Task::KeyUse, side, 2),
            noise_dims: 0,
            timer: false,
            doors_open: false,
            lava: 0,
        }
    }

    /// Parses an environment spec string such as `multiroom-r3-s13-timer`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut parts = spec.trim().split('-');
        let head = parts.next().unwrap_or_default();
        let mut cfg = match head {
            "multiroom" => Self::multiroom(0, 0),
            "keyuse" => Self::keyuse(0),
            other => return Err(invalid(format!("unknown task {other:?} in env spec {spec:?}"))),
        };
        let mut explicit_t = None;
        for p in parts {
            let num = |prefix: &str| -> Result<usize> {
                p[prefix.len()..]
                    .parse()
                    .map_err(|_| invalid(format!("bad number in {p:?} of env spec {spec:?}")))
            };
            if p == "timer" {
                cfg.timer = true;
            } else if p == "open" && cfg.task == Task::MultiRoom {
                cfg.doors_open = true;
            } else if p.starts_with("noise") {
                cfg.noise_dims = num("noise")?;
            } else if p.starts_with("lava") {
                cfg.lava = num("lava")?;
            } else if p.starts_with('r') && cfg.task == Task::MultiRoom {
                cfg.rooms = num("r")?;
            } else if p.starts_with('s') {
                cfg.side = num("s")?;
            } else if p.starts_with('t') {
                explicit_t = Some(num("t")? as u32);
            } else {
                return Err(invalid(format!("unknown component {p:?} in env spec {spec:?}")));
            }
        }
        cfg.max_steps = explicit_t.unwrap_or_else(|| default_max_steps(cfg.task, cfg.side, cfg.rooms));
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_steps < 1 {
            return Err(invalid("episode cap must be at least 1"));
        }
        match self.task {
            Task::MultiRoom => {
                if self.rooms < 1 {
                    return Err(invalid("multiroom needs at least one room"));
                }
                if self.side < 2 * self.rooms + 1 || self.side < 4 {
                    return Err(invalid(format!(
                        "side {} too small for {} rooms (need at least {})",
                        self.side,
                        self.rooms,
                        (2 * self.rooms + 1).max(4)
                    )));
                }
            }
            Task::KeyUse => {
                if self.side < 6 {
                    return Err(invalid(format!(
                        "keyuse side {} too small (need at least 6)",
                        self.side
                    )));
                }
            }
        }
        if self.side > 64 {
            return Err(invalid("side length above 64 is not supported"));
        }
        Ok(())
    }

    /// Side length of the egocentric view window.
    pub fn view(&self) -> usize {
        2 * self.side - 1
    }

    /// Length of the dense network input built by [`Observation::write_input`].
    pub fn input_dim(&self) -> usize {
        self.view() * self.view() * NUM_CELL_TAGS + 1 + usize::from(self.timer) + self.noise_dims
    }

    /// Number of distinct agent cells (the one-hot key space).
    pub fn key_space(&self) -> usize {
        self.side * self.side
    }
}

impl fmt::Display for EnvConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.task {
            Task::MultiRoom => write!(f, "multiroom-r{}-s{}", self.rooms, self.side)?,
            Task::KeyUse => write!(f, "keyuse-s{}", self.side)?,
        }
        if self.doors_open {
            write!(f, "-open")?;
        }
        if self.noise_dims > 0 {
            write!(f, "-noise{}", self.noise_dims)?;
        }
        if self.lava > 0 {
            write!(f, "-lava{}", self.lava)?;
        }
        if self.timer {
            write!(f, "-timer")?;
        }
        if self.max_steps != default_max_steps(self.task, self.side, self.rooms) {
            write!(f, "-t{}", self.max_steps)?;
        }
        Ok(())
    }
}

/// Default episode cap.
pub fn default_max_steps(task: Task, side: usize, rooms: usize) -> u32 {
    match task {
        Task::MultiRoom => (4 * side * rooms.max(1)) as u32,
        Task::KeyUse => (8 * side) as u32,
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Layout {
    pub side: usize,
    pub cells: Vec<Cell>,
    pub rooms: usize,
    pub start: (usize, usize),
    pub goal: (usize, usize),
}

impl Layout {
    pub fn at(&self, x: usize, y: usize) -> Cell {
        self.cells[y * self.side + x]
    }

    pub fn render(&self) -> String {
        let mut s = String::with_capacity(self.side * (self.side + 1));
        for y in 0..self.side {
            for x in 0..self.side {
                s.push(if (x, y) == self.start {
                    '@'
                } else {
                    self.at(x, y).symbol()
                });
            }
            s.push('\n');
        }
        s
    }
}

/// Cells reachable from `from` where `pass` decides which tags can be entered.
pub fn flood_fill(cells: &[Cell], side: usize, from: (usize, usize), pass: impl Fn(Cell) -> bool) -> Vec<bool> {
    let mut seen = vec![false; cells.len()];
    let mut queue = VecDeque::new();
    seen[from.1 * side + from.0] = true;
    queue.push_back(from);
    while let Some((x, y)) = queue.pop_front() {
        for (dx, dy) in [(0isize, -1isize), (0, 1), (-1, 0), (1, 0)] {
            let nx = x as isize + dx;
            let ny = y as isize + dy;
            if nx < 0 || ny < 0 || nx >= side as isize || ny >= side as isize {
                continue;
            }
            let idx = ny as usize * side + nx as usize;
            if !seen[idx] && pass(cells[idx]) {
                seen[idx] = true;
                queue.push_back((nx as usize, ny as usize));
            }
        }
    }
    seen
}

/// True when the goal can be reached from the start (doors passable, key
/// reachable without crossing doors when the task needs one).
pub fn is_solvable(layout: &Layout) -> bool {
    let s = layout.side;
    let border_ok = (0..s).all(|i| {
        layout.at(i, 0) == Cell::Wall
            && layout.at(i, s - 1) == Cell::Wall
            && layout.at(0, i) == Cell::Wall
            && layout.at(s - 1, i) == Cell::Wall
    });
    if !border_ok {
        return false;
    }
    let with_doors = flood_fill(&layout.cells, s, layout.start, |c| {
        matches!(c, Cell::Floor | Cell::DoorOpen | Cell::DoorClosed | Cell::Goal)
    });
    if !with_doors[layout.goal.1 * s + layout.goal.0] {
        return false;
    }
    let keys: Vec<usize> = (0..layout.cells.len())
        .filter(|&i| layout.cells[i] == Cell::Key)
        .collect();
    if keys.is_empty() {
        return true;
    }
    let no_doors = flood_fill(&layout.cells, s, layout.start, |c| {
        matches!(c, Cell::Floor | Cell::DoorOpen)
    });
    keys.iter().all(|&k| {
        let (kx, ky) = (k % s, k / s);
        [(0isize, -1isize), (0, 1), (-1, 0), (1, 0)].iter().any(|(dx, dy)| {
            let nx = kx as isize + dx;
            let ny = ky as isize + dy;
            nx >= 0 && ny >= 0 && (nx as usize) < s && (ny as usize) < s && no_doors[ny as usize * s + nx as usize]
        })
    })
}

/// Layout for a context. Deterministic in `(ctx, cfg)`; retries with a
/// perturbed stream when a candidate fails validation.
pub fn generate_layout(ctx: Context, cfg: &EnvConfig) -> Result<Layout> {
    cfg.validate()?;
    if ctx.task != cfg.task {
        return Err(invalid("context task does not match the environment config"));
    }
    for attempt in 0..100u64 {
        let mut rng = SplitMix64::stream(ctx.seed, 0x1A70_0000 + attempt);
        let layout = match cfg.task {
            Task::MultiRoom => chain_of_rooms(cfg, cfg.rooms, &mut rng, false),
            Task::KeyUse => chain_of_rooms(cfg, 2, &mut rng, true),
        };
        if let Some(l) = layout {
            if is_solvable(&l) {
                return Ok(l);
            }
        }
    }
    Err(Error::Generation(format!(
        "no solvable layout for seed {} after 100 attempts",
        ctx.seed
    )))
}

/// `rooms` strips along a random axis and direction, joined by doors in the
/// separating walls. Start in the first room, goal in the last; with `locked`
/// the single door needs a key placed in the first room.
fn chain_of_rooms(cfg: &EnvConfig, rooms: usize, rng: &mut SplitMix64, locked: bool) -> Option<Layout> {
    let s = cfg.side;
    let interior = s - 2;
    // widths along the chain axis; each room gets at least one column
    let mut widths = vec![1usize; rooms];
    for _ in 0..interior - (2 * rooms - 1) {
        widths[rng.below(rooms)] += 1;
    }
    let transpose = rng.below(2) == 1;
    let reverse = rng.below(2) == 1;

    // canonical frame: rooms run left to right along `a`, `b` is the cross axis
    let mut grid = vec![Cell::Wall; s * s];
    let mut room_cols: Vec<(usize, usize)> = Vec::with_capacity(rooms);
    let mut a = 1;
    for (r, &w) in widths.iter().enumerate() {
        room_cols.push((a, a + w - 1));
        for col in a..a + w {
            for b in 1..s - 1 {
                grid[b * s + col] = Cell::Floor;
            }
        }
        a += w;
        if r + 1 < rooms {
            let door_b = 1 + rng.below(interior);
            grid[door_b * s + a] = if cfg.doors_open && !locked {
                Cell::DoorOpen
            } else {
                Cell::DoorClosed
            };
            a += 1;
        }
    }

    let pick = |rng: &mut SplitMix64, room: usize, grid: &[Cell], avoid: &[(usize, usize)]| -> Option<(usize, usize)> {
        let (lo, hi) = room_cols[room];
        let cand: Vec<(usize, usize)> = (lo..=hi)
            .flat_map(|c| (1..s - 1).map(move |b| (c, b)))
            .filter(|&(c, b)| grid[b * s + c] == Cell::Floor && !avoid.contains(&(c, b)))
            .collect();
        if cand.is_empty() {
            None
        } else {
            Some(cand[rng.below(cand.len())])
        }
    };
    let start = pick(rng, 0, &grid, &[])?;
    let goal = pick(rng, rooms - 1, &grid, &[start])?;
    grid[goal.1 * s + goal.0] = Cell::Goal;
    if locked {
        let key = pick(rng, 0, &grid, &[start])?;
        grid[key.1 * s + key.0] = Cell::Key;
    }
    for _ in 0..cfg.lava {
        let room = rng.below(rooms);
        let spot = pick(rng, room, &grid, &[start])?;
        grid[spot.1 * s + spot.0] = Cell::Lava;
    }

    let map = |(c, b): (usize, usize)| -> (usize, usize) {
        let c = if reverse { s - 1 - c } else { c };
        if transpose {
            (b, c)
        } else {
            (c, b)
        }
    };
    let mut cells = vec![Cell::Wall; s * s];
    for b in 0..s {
        for c in 0..s {
            let (x, y) = map((c, b));
            cells[y * s + x] = grid[b * s + c];
        }
    }
    Some(Layout {
        side: s,
        cells,
        rooms,
        start: map(start),
        goal: map(goal),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub side: usize,
    pub grid: Vec<Cell>,
    pub x: usize,
    pub y: usize,
    pub t: u32,
    /// Whether the time counter is part of the observation.
    pub timer: bool,
    pub message: u8,
    pub carrying: bool,
    pub noise: Vec<f64>,
}

impl Observation {
    pub fn position_index(&self) -> usize {
        self.y * self.side + self.x
    }

    /// Dense network input: an egocentric one-hot rendering of the grid
    /// (window `2·side − 1`, agent at the centre, off-grid cells all zero),
    /// then the carrying flag, `t / max_steps` when the timer is on, and the
    /// noise values.
    pub fn write_input(&self, max_steps: u32, out: &mut Vec<f64>) {
        let s = self.side;
        let v = 2 * s - 1;
        out.clear();
        out.resize(v * v * NUM_CELL_TAGS, 0.0);
        let ox = s - 1 - self.x;
        let oy = s - 1 - self.y;
        for gy in 0..s {
            for gx in 0..s {
                let idx = ((gy + oy) * v + (gx + ox)) * NUM_CELL_TAGS + self.grid[gy * s + gx] as usize;
                out[idx] = 1.0;
            }
        }
        out.push(if self.carrying { 1.0 } else { 0.0 });
        if self.timer {
            out.push(self.t as f64 / max_steps as f64);
        }
        out.extend_from_slice(&self.noise);
    }

    pub fn input(&self, max_steps: u32) -> Vec<f64> {
        let mut v = Vec::new();
        self.write_input(max_steps, &mut v);
        v
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub obs: Observation,
    pub reward: f64,
    pub done: bool,
}

/// One environment instance. Single-threaded; the noise stream is owned.
#[derive(Debug, Clone)]
pub struct GridEnv {
    cfg: EnvConfig,
    layout: Option<Layout>,
    cells: Vec<Cell>,
    pos: (usize, usize),
    t: u32,
    carrying: bool,
    done: bool,
    noise_rng: SplitMix64,
}

impl GridEnv {
    pub fn new(cfg: EnvConfig, noise_seed: u64) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            layout: None,
            cells: Vec::new(),
            pos: (0, 0),
            t: 0,
            carrying: false,
            done: true,
            noise_rng: SplitMix64::stream(noise_seed, 0x0015E),
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn layout(&self) -> Option<&Layout> {
        self.layout.as_ref()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn reset(&mut self, ctx: Context) -> Result<Observation> {
        let layout = generate_layout(ctx, &self.cfg)?;
        self.cells = layout.cells.clone();
        self.pos = layout.start;
        self.layout = Some(layout);
        self.t = 0;
        self.carrying = false;
        self.done = false;
        Ok(self.observe(MSG_NONE))
    }

    fn observe(&mut self, message: u8) -> Observation {
        let noise = (0..self.cfg.noise_dims).map(|_| self.noise_rng.normal()).collect();
        Observation {
            side: self.cfg.side,
            grid: self.cells.clone(),
            x: self.pos.0,
            y: self.pos.1,
            t: self.t,
            timer: self.cfg.timer,
            message,
            carrying: self.carrying,
            noise,
        }
    }

    fn neighbours(&self) -> impl Iterator<Item = usize> + '_ {
        let s = self.cfg.side;
        let (x, y) = self.pos;
        [(0isize, -1isize), (0, 1), (-1, 0), (1, 0)]
            .into_iter()
            .filter_map(move |(dx, dy)| {
                let nx = x as isize + dx;
                let ny = y as isize + dy;
                (nx >= 0 && ny >= 0 && (nx as usize) < s && (ny as usize) < s).then(|| ny as usize * s + nx as usize)
            })
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome> {
        if self.done {
            return Err(Error::Contract("step called on a finished episode; reset first".into()));
        }
        let s = self.cfg.side;
        let mut reward = 0.0;
        let mut message = MSG_NONE;
        let mut terminal = false;
        match action {
            Action::Interact => {
                let near: Vec<usize> = self.neighbours().collect();
                if let Some(&k) = near.iter().find(|&&i| self.cells[i] == Cell::Key) {
                    self.cells[k] = Cell::Floor;
                    self.carrying = true;
                    message = MSG_KEY_PICKED;
                } else if let Some(&d) = near.iter().find(|&&i| self.cells[i] == Cell::DoorClosed) {
                    if self.cfg.task == Task::MultiRoom || self.carrying {
                        self.cells[d] = Cell::DoorOpen;
                        message = MSG_DOOR_OPENED;
                    } else {
                        message = MSG_DOOR_LOCKED;
                    }
                }
            }
            _ => {
                let (dx, dy) = action.delta();
                let nx = (self.pos.0 as isize + dx) as usize;
                let ny = (self.pos.1 as isize + dy) as usize;
                let target = self.cells[ny * s + nx];
                if target.walkable() {
                    self.pos = (nx, ny);
                    match target {
                        Cell::Goal => {
                            reward = 1.0;
                            terminal = true;
                        }
                        Cell::Lava => terminal = true,
                        _ => {}
                    }
                }
            }
        }
        self.t += 1;
        if self.t >= self.cfg.max_steps {
            terminal = true;
        }
        self.done = terminal;
        Ok(StepOutcome {
            obs: self.observe(message),
            reward,
            done: terminal,
        })
    }
}
