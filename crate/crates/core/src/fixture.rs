//! The eight-row salaries table used throughout the docs, tests and demo.
//!
//! | id | Country | Degree | Income |
//! |----|---------|--------|--------|
//! | 1  | Bhutan  | BS     | 1200   |
//! | 2  | Bhutan  | BS     | 0      |
//! | 3  | Bhutan  | MS     |        |
//! | 4  | Bhutan  | BS     | 12k    |
//! | 5  | Chad    | BS     | 1100   |
//! | 6  | Chad    | MS     | 1150   |
//! | 7  | Chad    | PhD    | 95000  |
//! | 8  | Chad    | BS     | 1000   |

pub const SALARIES_CSV: &str = "\
Country,Degree,Income
Bhutan,BS,1200
Bhutan,BS,0
Bhutan,MS,
Bhutan,BS,12k
Chad,BS,1100
Chad,MS,1150
Chad,PhD,95000
Chad,BS,1000
";
