use super::Thought;

/// Literature optimization techniques used as the initial thought set,
/// as `(category, description)`.
pub const SEED_THOUGHTS: [(&str, &str); 20] = [
    ("Memory", "Pinned memory"),
    ("Memory", "Asynchronous and overlapping transfers with computation"),
    ("Memory", "Zero copy"),
    ("Memory", "Unified virtual addressing"),
    ("Memory", "Device memory spaces"),
    ("Memory", "Device memory allocation"),
    ("Memory", "NUMA tuning"),
    ("Execution Configuration", "Occupancy"),
    ("Execution Configuration", "Hiding Register Dependencies"),
    ("Execution Configuration", "Thread and Block Heuristics"),
    ("Execution Configuration", "Effects of Shared Memory"),
    ("Execution Configuration", "Concurrent Kernel Execution"),
    ("Execution Configuration", "Multiple contexts"),
    ("Instruction Optimization", "Arithmetic Instructions"),
    ("Instruction Optimization", "Memory Instructions"),
    ("Control Flow", "Branching and Divergence"),
    ("Control Flow", "Branch Predication"),
    ("Others", "Maximizing parallel execution"),
    ("Others", "Maximizing memory bandwidth"),
    ("Others", "Maximizing instruction throughput"),
];

/// The twenty seed thoughts, descriptions only (no code, zero efficiency,
/// no embedding).
pub fn init_thought_seeds() -> Vec<Thought> {
    SEED_THOUGHTS
        .iter()
        .enumerate()
        .map(|(i, (category, description))| Thought {
            id: format!("seed-{i:02}"),
            description: (*description).to_string(),
            code_examples: String::new(),
            efficiency: 0.0,
            member_commit_ids: Vec::new(),
            embedding: Vec::new(),
            category: Some((*category).to_string()),
            unvalidated: false,
        })
        .collect()
}
