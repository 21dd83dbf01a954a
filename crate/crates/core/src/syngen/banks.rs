//! Phrase banks for synthetic note generation.
//!
//! Criterion templates paraphrase the DSM-5 examples; `{S}` marks the subject slot.

use crate::corpus::Criterion;

pub(super) const SUBJECTS: &[&str] = &["He", "She", "The child", "The patient", "The student"];

pub(super) const PREFIXES: &[&str] = &[
    "",
    "Mother reports that ",
    "Father states that ",
    "Teacher notes that ",
    "Per parent report, ",
    "During the observation, ",
    "Examiner observed that ",
];

pub(super) const SUFFIXES: &[&str] = &["", " at home", " at school", " during the visit", " most days"];

pub(super) fn criterion_templates(c: Criterion) -> &'static [&'static str] {
    match c {
        Criterion::A1 => &[
            "{S} does not respond when peers initiate conversation",
            "{S} rarely shares enjoyment or interests with others",
            "{S} fails to engage in back-and-forth conversation",
            "{S} does not show or bring objects to share with adults",
            "{S} approaches strangers in an unusual social manner",
            "{S} shows reduced sharing of emotions and affect",
            "{S} does not respond to name when called",
            "{S} talks at length without noticing the listener",
        ],
        Criterion::A2 => &[
            "{S} makes poor eye contact",
            "{S} avoids eye contact with the examiner",
            "{S} rarely uses gestures such as pointing or waving",
            "{S} shows a limited range of facial expressions",
            "{S} does not coordinate gaze with gestures",
            "{S} has flat facial affect and odd body language",
            "{S} does not understand nonverbal cues from others",
            "{S} does not smile back when smiled at",
        ],
        Criterion::A3 => &[
            "{S} has no friends and shows little interest in peers",
            "{S} prefers to play alone and ignores other children",
            "{S} has difficulty making friends",
            "{S} does not engage in imaginative play with peers",
            "{S} struggles to adjust behavior to different social settings",
            "{S} shows no interest in joining group games",
            "{S} cannot maintain friendships with classmates",
            "{S} withdraws from peers on the playground",
        ],
        Criterion::B1 => &[
            "{S} lines up toys in rows",
            "{S} flaps hands when excited",
            "{S} repeats phrases from television shows",
            "{S} spins in circles repeatedly",
            "{S} flips objects over and over",
            "{S} shows echolalia and repeats words back",
            "{S} rocks body back and forth",
            "{S} uses idiosyncratic phrases repeatedly",
        ],
        Criterion::B2 => &[
            "{S} becomes extremely upset with small changes in routine",
            "{S} insists on taking the same route every day",
            "{S} has difficulty with transitions between activities",
            "{S} insists on eating the same food every day",
            "{S} has rigid thinking patterns",
            "{S} follows strict greeting rituals",
            "{S} tantrums when the daily schedule changes",
            "{S} requires things to be done in exactly the same order",
        ],
        Criterion::B3 => &[
            "{S} is preoccupied with trains",
            "{S} carries a favorite string everywhere and cannot part with it",
            "{S} talks only about dinosaurs",
            "{S} has an intense fixation on ceiling fans",
            "{S} is obsessed with maps and street signs",
            "{S} has perseverative interest in numbers",
            "{S} shows strong attachment to unusual objects",
            "{S} has narrow interests abnormal in intensity",
        ],
        Criterion::B4 => &[
            "{S} covers ears in response to loud sounds",
            "{S} seems indifferent to pain",
            "{S} is fascinated by spinning lights",
            "{S} smells objects excessively",
            "{S} reacts strongly to certain textures of clothing",
            "{S} touches surfaces repeatedly to feel their texture",
            "{S} shows little reaction to hot or cold temperature",
            "{S} stares at moving objects for long periods",
        ],
    }
}

pub(super) const FILLER: &[&str] = &[
    "{S} was seen today for a follow-up appointment",
    "{S} sleeps well through the night",
    "{S} eats a balanced diet",
    "Vaccines are up to date",
    "Vital signs are within normal limits",
    "{S} is in the second grade",
    "Hearing screening was normal",
    "Vision screening was normal",
    "{S} lives with both parents and a younger sibling",
    "No known drug allergies",
    "{S} takes no daily medication",
    "Birth history was unremarkable",
    "{S} walked at twelve months",
    "Height and weight are tracking along the curve",
    "{S} had an ear infection last winter",
    "Family history is negative for seizures",
    "{S} attends speech therapy once a week",
    "The evaluation was completed in the clinic",
    "Parents completed the intake questionnaire",
    "{S} was cooperative with the physical exam",
    "Lungs are clear to auscultation",
    "Heart rate and rhythm are regular",
    "{S} enjoys riding a bicycle",
    "Psychological testing is scheduled for next month",
    "{S} has a mild cough",
    "Records from the previous provider were reviewed",
    "Follow-up is recommended in six months",
    "{S} was born at term by vaginal delivery",
    "Teeth are in good condition",
    "{S} reads at grade level",
];

/// Swappable content words and the dataset-specific synonyms a dialect may use for them.
pub(super) const SWAP_TABLE: &[(&str, &[&str])] = &[
    ("adults", &["grownups"]),
    ("alone", &["solo", "by himself or herself"]),
    ("appointment", &["visit", "encounter"]),
    ("attachment", &["bond"]),
    ("avoids", &["evades", "shuns"]),
    ("balanced", &["varied"]),
    ("body", &["torso", "trunk"]),
    ("children", &["kids"]),
    ("classmates", &["schoolmates"]),
    ("clinic", &["office"]),
    ("conversation", &["dialogue", "discussion"]),
    ("covers", &["shields", "blocks"]),
    ("emotions", &["feelings"]),
    ("enjoyment", &["pleasure"]),
    ("evaluation", &["assessment"]),
    ("excited", &["thrilled", "elated"]),
    ("eye", &["ocular"]),
    ("facial", &["face"]),
    ("favorite", &["preferred"]),
    ("fixation", &["focus"]),
    ("flaps", &["waves", "shakes"]),
    ("flips", &["turns", "overturns"]),
    ("friends", &["pals", "buddies"]),
    ("gestures", &["signals"]),
    ("ignores", &["disregards"]),
    ("imaginative", &["pretend"]),
    ("indifferent", &["unresponsive", "insensitive"]),
    ("interest", &["curiosity"]),
    ("interests", &["hobbies", "pursuits"]),
    ("lights", &["lamps", "bulbs"]),
    ("lines", &["arranges"]),
    ("loud", &["noisy"]),
    ("medication", &["prescription"]),
    ("normal", &["typical"]),
    ("objects", &["items", "things"]),
    ("obsessed", &["fixated"]),
    ("pain", &["hurt"]),
    ("peers", &["agemates"]),
    ("phrases", &["sayings"]),
    ("pointing", &["indicating"]),
    ("preoccupied", &["absorbed"]),
    ("repeats", &["echoes", "reiterates"]),
    ("rigid", &["inflexible"]),
    ("rituals", &["ceremonies"]),
    ("rocks", &["sways"]),
    ("route", &["path", "way"]),
    ("routine", &["schedule"]),
    ("sleeps", &["rests"]),
    ("smells", &["sniffs"]),
    ("sounds", &["noises"]),
    ("spins", &["twirls", "whirls"]),
    ("strangers", &["unfamiliar people"]),
    ("tantrums", &["meltdowns"]),
    ("textures", &["fabrics"]),
    ("toys", &["playthings"]),
    ("trains", &["locomotives"]),
    ("transitions", &["switches"]),
    ("upset", &["distressed", "agitated"]),
    ("waving", &["gesturing"]),
];
