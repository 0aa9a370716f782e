//! Templated synthetic corpus: 20 role families in 5 sectors, with ESCO-style
//! skill phrases, sector-shared skills, generic skills and a two-level skill
//! hierarchy (skill → family category → sector category).
//!
//! Job descriptions open with three skill sentences, which is what the
//! extractive summarizer keeps, followed by further skills and boilerplate.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::{Corpus, HierarchyEdge, JobRecord, SkillRecord};
use crate::hash::keyed_rng;

struct Family {
    name: &'static str,
    titles: [&'static str; 4],
    skills: [&'static str; 5],
}

struct Sector {
    name: &'static str,
    shared: [&'static str; 2],
    families: [Family; 4],
}

const SECTORS: [Sector; 5] = [
    Sector {
        name: "Information Technology",
        shared: ["use version control systems", "write technical documentation"],
        families: [
            Family {
                name: "Data Science",
                titles: ["Data Scientist", "Data Analyst", "Machine Learning Engineer", "Analytics Specialist"],
                skills: [
                    "train machine learning models",
                    "analyse large datasets",
                    "build statistical forecasts",
                    "visualise data in dashboards",
                    "clean and prepare data",
                ],
            },
            Family {
                name: "Software Development",
                titles: ["Software Engineer", "Backend Developer", "Frontend Developer", "Application Developer"],
                skills: [
                    "write production software code",
                    "design software architecture",
                    "review code changes",
                    "build web applications",
                    "debug software defects",
                ],
            },
            Family {
                name: "Cloud Operations",
                titles: ["DevOps Engineer", "Cloud Engineer", "Site Reliability Engineer", "Platform Engineer"],
                skills: [
                    "automate cloud infrastructure",
                    "maintain deployment pipelines",
                    "monitor system reliability",
                    "manage linux servers",
                    "configure container platforms",
                ],
            },
            Family {
                name: "Cyber Security",
                titles: ["Security Analyst", "Security Engineer", "Penetration Tester", "Information Security Officer"],
                skills: [
                    "monitor security incidents",
                    "perform penetration testing",
                    "manage access controls",
                    "assess cyber security risks",
                    "respond to security breaches",
                ],
            },
        ],
    },
    Sector {
        name: "Business and Finance",
        shared: ["prepare business reports", "use crm software"],
        families: [
            Family {
                name: "Sales",
                titles: ["Sales Representative", "Account Executive", "Sales Manager", "Business Development Manager"],
                skills: [
                    "negotiate sales contracts",
                    "prospect new customers",
                    "manage key client accounts",
                    "meet sales targets",
                    "present products to clients",
                ],
            },
            Family {
                name: "Marketing",
                titles: ["Marketing Manager", "Brand Manager", "Digital Marketing Specialist", "Marketing Coordinator"],
                skills: [
                    "plan marketing campaigns",
                    "manage brand portfolios",
                    "manage social media channels",
                    "analyse market research",
                    "write marketing content",
                ],
            },
            Family {
                name: "Finance",
                titles: ["Financial Analyst", "Accountant", "Finance Manager", "Financial Controller"],
                skills: [
                    "prepare financial statements",
                    "manage budgets and forecasts",
                    "reconcile ledger accounts",
                    "perform financial audits",
                    "analyse financial performance",
                ],
            },
            Family {
                name: "Human Resources",
                titles: ["HR Manager", "Recruiter", "HR Business Partner", "Talent Acquisition Specialist"],
                skills: [
                    "recruit new employees",
                    "manage employee relations",
                    "administer payroll and benefits",
                    "conduct job interviews",
                    "develop training programmes",
                ],
            },
        ],
    },
    Sector {
        name: "Operations and Administration",
        shared: ["schedule team shifts", "follow operating procedures"],
        families: [
            Family {
                name: "Logistics",
                titles: ["Logistics Coordinator", "Supply Chain Manager", "Warehouse Supervisor", "Procurement Specialist"],
                skills: [
                    "manage warehouse inventory",
                    "coordinate freight shipments",
                    "negotiate with suppliers",
                    "plan supply chain operations",
                    "track purchase orders",
                ],
            },
            Family {
                name: "Project Management",
                titles: ["Project Manager", "Program Manager", "Project Coordinator", "Scrum Master"],
                skills: [
                    "plan project schedules",
                    "manage project budgets",
                    "coordinate project teams",
                    "track project risks",
                    "report project status",
                ],
            },
            Family {
                name: "Customer Support",
                titles: ["Customer Service Representative", "Help Desk Technician", "Customer Success Manager", "Support Specialist"],
                skills: [
                    "resolve customer complaints",
                    "answer customer enquiries",
                    "operate help desk tickets",
                    "maintain customer records",
                    "handle support calls",
                ],
            },
            Family {
                name: "Office Administration",
                titles: ["Executive Assistant", "Office Manager", "Administrative Assistant", "Receptionist"],
                skills: [
                    "coordinate office staff",
                    "manage executive calendars",
                    "organise office supplies",
                    "greet office visitors",
                    "prepare meeting minutes",
                ],
            },
        ],
    },
    Sector {
        name: "Health Education and Science",
        shared: ["protect confidential information", "follow clinical guidelines"],
        families: [
            Family {
                name: "Nursing",
                titles: ["Registered Nurse", "Nurse Practitioner", "Clinical Nurse", "Charge Nurse"],
                skills: [
                    "administer patient medication",
                    "monitor patient vital signs",
                    "provide patient care",
                    "maintain medical records",
                    "assist physicians in treatment",
                ],
            },
            Family {
                name: "Pharmacy",
                titles: ["Pharmacist", "Pharmacy Technician", "Clinical Pharmacist", "Pharmacy Manager"],
                skills: [
                    "dispense prescription medicines",
                    "advise patients on medication",
                    "manage pharmacy stock",
                    "check drug interactions",
                    "compound pharmaceutical products",
                ],
            },
            Family {
                name: "Teaching",
                titles: ["Teacher", "Lecturer", "Teaching Assistant", "Tutor"],
                skills: [
                    "plan lesson content",
                    "teach classroom lessons",
                    "assess student progress",
                    "mentor students",
                    "develop course curriculum",
                ],
            },
            Family {
                name: "Research",
                titles: ["Research Scientist", "Research Assistant", "Laboratory Technician", "Principal Investigator"],
                skills: [
                    "conduct laboratory experiments",
                    "write scientific publications",
                    "apply for research grants",
                    "analyse experimental results",
                    "operate laboratory equipment",
                ],
            },
        ],
    },
    Sector {
        name: "Creative and Engineering",
        shared: ["use design software", "manage client briefs"],
        families: [
            Family {
                name: "Graphic Design",
                titles: ["Graphic Designer", "Visual Designer", "UX Designer", "Art Director"],
                skills: [
                    "design visual layouts",
                    "create brand illustrations",
                    "prototype user interfaces",
                    "edit digital images",
                    "prepare print artwork",
                ],
            },
            Family {
                name: "Content Writing",
                titles: ["Content Writer", "Copywriter", "Editor", "Technical Writer"],
                skills: [
                    "write web content",
                    "edit written copy",
                    "proofread articles",
                    "research article topics",
                    "optimise content for search engines",
                ],
            },
            Family {
                name: "Mechanical Engineering",
                titles: ["Mechanical Engineer", "Design Engineer", "Maintenance Engineer", "Manufacturing Engineer"],
                skills: [
                    "design mechanical components",
                    "use cad software",
                    "maintain industrial machinery",
                    "improve manufacturing processes",
                    "test product prototypes",
                ],
            },
            Family {
                name: "Construction",
                titles: ["Civil Engineer", "Site Manager", "Construction Manager", "Quantity Surveyor"],
                skills: [
                    "supervise construction sites",
                    "estimate construction costs",
                    "inspect building structures",
                    "manage subcontractors",
                    "read technical drawings",
                ],
            },
        ],
    },
];

/// Generic skills with their relative draw weights; the first is common
/// enough to exceed the 20% job-share cut.
const GENERIC: [(&str, f64); 5] = [
    ("communicate with colleagues and clients", 0.6),
    ("work effectively in a team", 0.1),
    ("manage time and priorities", 0.1),
    ("use microsoft office", 0.1),
    ("solve problems independently", 0.1),
];

const SENIORITY: [&str; 6] = ["Junior", "Senior", "Lead", "Principal", "Associate", "Trainee"];

const BOILERPLATE: [&str; 4] = [
    "We offer a competitive salary and benefits.",
    "Flexible and hybrid working is available.",
    "We are an equal opportunity employer.",
    "Apply today with your CV.",
];

pub const FAMILY_COUNT: usize = 20;

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().collect::<String>() + c.as_str(),
        None => String::new(),
    }
}

fn slug(s: &str) -> String {
    s.to_lowercase()
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join("-")
}

struct SkillPool {
    skills: Vec<SkillRecord>,
    hierarchy: Vec<HierarchyEdge>,
}

/// Build the ordered skill pool and truncate it to `n_skills`. Categories,
/// generic and sector skills come first; family skills follow rank by rank,
/// so truncation drops the least central family skills evenly. Pools larger
/// than the catalogue get numbered specialisations of family skills.
fn skill_pool(n_skills: usize) -> SkillPool {
    let mut head = Vec::new();
    let mut parents: Vec<(String, String)> = Vec::new();
    for sector in &SECTORS {
        let sid = format!("cat-{}", slug(sector.name));
        head.push(SkillRecord {
            id: sid.clone(),
            name: sector.name.to_string(),
            description: format!("{} skills and competences", sector.name.to_lowercase()),
            is_category: true,
        });
        for fam in &sector.families {
            let fid = format!("cat-{}", slug(fam.name));
            head.push(SkillRecord {
                id: fid.clone(),
                name: fam.name.to_string(),
                description: format!("{} skills: {}", fam.name.to_lowercase(), fam.skills[..2].join(", ")),
                is_category: true,
            });
            parents.push((fid, sid.clone()));
        }
    }
    for (phrase, _) in &GENERIC {
        head.push(SkillRecord {
            id: format!("sk-{}", slug(phrase)),
            name: phrase.to_string(),
            description: phrase.to_string(),
            is_category: false,
        });
    }
    for sector in &SECTORS {
        let sid = format!("cat-{}", slug(sector.name));
        for phrase in &sector.shared {
            let id = format!("sk-{}", slug(phrase));
            head.push(SkillRecord {
                id: id.clone(),
                name: phrase.to_string(),
                description: phrase.to_string(),
                is_category: false,
            });
            parents.push((id, sid.clone()));
        }
    }
    let mut tail = Vec::new();
    for rank in 0..5 {
        for sector in &SECTORS {
            for fam in &sector.families {
                let phrase = fam.skills[rank];
                tail.push((
                    SkillRecord {
                        id: format!("sk-{}", slug(phrase)),
                        name: phrase.to_string(),
                        description: phrase.to_string(),
                        is_category: false,
                    },
                    format!("cat-{}", slug(fam.name)),
                ));
            }
        }
    }
    let base_tail = tail.len();
    let mut i = 0;
    while head.len() + tail.len() < n_skills {
        let (orig, parent) = &tail[i % base_tail];
        let level = i / base_tail + 2;
        let rec = SkillRecord {
            id: format!("{}-{level}", orig.id),
            name: format!("{} (level {level})", orig.name),
            description: format!("{} at level {level}", orig.description),
            is_category: false,
        };
        let parent = parent.clone();
        tail.push((rec, parent));
        i += 1;
    }
    let mut skills = head;
    for (rec, parent) in tail {
        parents.push((rec.id.clone(), parent));
        skills.push(rec);
    }
    skills.truncate(n_skills);
    let kept: std::collections::HashSet<&str> = skills.iter().map(|s| s.id.as_str()).collect();
    let hierarchy = parents
        .into_iter()
        .filter(|(c, p)| kept.contains(c.as_str()) && kept.contains(p.as_str()))
        .map(|(c, p)| HierarchyEdge {
            child_skill_id: c,
            parent_skill_id: p,
        })
        .collect();
    SkillPool { skills, hierarchy }
}

/// Generate `n_jobs` jobs round-robin over the 20 families and an
/// `n_skills`-entry skill list. Deterministic for a fixed seed.
pub fn generate_corpus(n_jobs: usize, n_skills: usize, seed: u64) -> Corpus {
    let pool = skill_pool(n_skills);
    let present: std::collections::HashSet<&str> =
        pool.skills.iter().map(|s| s.name.as_str()).collect();
    let families: Vec<(&Sector, &Family)> = SECTORS
        .iter()
        .flat_map(|s| s.families.iter().map(move |f| (s, f)))
        .collect();

    let mut title_pools: Vec<Vec<(String, usize)>> = families
        .iter()
        .enumerate()
        .map(|(fi, (_, fam))| {
            let mut titles: Vec<(String, usize)> =
                fam.titles.iter().enumerate().map(|(n, t)| (t.to_string(), n)).collect();
            for p in SENIORITY {
                titles.extend(fam.titles.iter().enumerate().map(|(n, t)| (format!("{p} {t}"), n)));
            }
            titles.shuffle(&mut keyed_rng(seed, &format!("titles-{fi}")));
            titles.reverse();
            titles
        })
        .collect();

    let mut rng = keyed_rng(seed, "jobs");
    let generic_total: f64 = GENERIC.iter().map(|g| g.1).sum();
    let mut jobs = Vec::with_capacity(n_jobs);
    for i in 0..n_jobs {
        let fi = i % families.len();
        let (sector, fam) = families[fi];
        let (title, noun) = title_pools[fi].pop().unwrap_or_else(|| {
            let n = i % fam.titles.len();
            (format!("{} {}", fam.titles[n], i / families.len() + 1), n)
        });

        // Each title noun has two core skills; the rest of the family's
        // skills follow in random order.
        let own: Vec<&str> = fam
            .skills
            .iter()
            .copied()
            .filter(|s| present.contains(s))
            .collect();
        let core: Vec<&str> = if own.len() >= 2 {
            vec![own[noun % own.len()], own[(noun + 1) % own.len()]]
        } else {
            own.clone()
        };
        let mut rest: Vec<&str> = own.iter().copied().filter(|s| !core.contains(s)).collect();
        rest.shuffle(&mut rng);
        let mut phrases: Vec<String> = core.iter().map(|s| s.to_string()).collect();
        let roll: f64 = rng.gen();
        if roll < 0.45 {
            let mut pick = rng.gen::<f64>() * generic_total;
            let mut chosen = GENERIC[0].0;
            for (g, w) in GENERIC {
                if pick < w {
                    chosen = g;
                    break;
                }
                pick -= w;
            }
            phrases.push(chosen.to_string());
        } else if roll < 0.65 {
            phrases.push(sector.shared[rng.gen_range(0..2)].to_string());
        }
        phrases.extend(rest.iter().map(|s| s.to_string()));
        let mut sentences: Vec<String> = phrases.iter().map(|p| format!("{}.", capitalize(p))).collect();
        let mut extra = BOILERPLATE.to_vec();
        extra.shuffle(&mut rng);
        sentences.extend(extra.iter().take(2).map(|s| s.to_string()));
        jobs.push(JobRecord {
            id: format!("j{:04}", i + 1),
            title,
            description: sentences.join(" "),
            summary: None,
        });
    }
    Corpus {
        jobs,
        skills: pool.skills,
        hierarchy: pool.hierarchy,
    }
}
