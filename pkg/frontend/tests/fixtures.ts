import type { QaPayload, RetrievePayload } from "../src/api.js";

/** A /retrieve payload as the service would emit it, with saliency
 * entries covering all three levels and full-precision scores. */
export const RETRIEVE_FIXTURE: RetrievePayload = {
  query_id: "query-1",
  toggles: { use_patients: true, use_guidelines: true },
  patient_hits: [
    {
      case_id: "case0042",
      hybrid: 0.8126453306272819,
      kw: 0.8181818181818182,
      sem: 0.8043406097954775,
      matched_concepts: [
        { concept_id: "C_FEVER", category: "symptom" },
        { concept_id: "C_PNA", category: "diagnosis" },
      ],
      sections: {
        s: "Fever and cough for two days.",
        o: "Temp 38.9, HR 104.",
        a: "Pneumonia likely.",
        p: "Start amoxicillin.",
      },
      saliency: [
        { concept_id: "C_PNA", score: 0.9231829386, level: "highly_important" },
        { concept_id: "C_FEVER", score: 0.61203947, level: "important" },
        { concept_id: "C_AMOX", score: 0.31077214, level: "none" },
      ],
      highlights: [
        {
          section: "subjective", start: 0, end: 5, surface: "Fever",
          concept_id: "C_FEVER", category: "symptom",
          score: 0.61203947, level: "important",
        },
        {
          section: "assessment", start: 0, end: 9, surface: "Pneumonia",
          concept_id: "C_PNA", category: "diagnosis",
          score: 0.9231829386, level: "highly_important",
        },
        {
          section: "plan", start: 6, end: 17, surface: "amoxicillin",
          concept_id: "C_AMOX", category: "medication",
          score: 0.31077214, level: "none",
        },
      ],
    },
    {
      case_id: "case0107",
      hybrid: 0.55,
      kw: 0.25,
      sem: 0.75,
      matched_concepts: [{ concept_id: "C_FEVER", category: "symptom" }],
      sections: { s: "Fever only.", o: "", a: "Viral illness.", p: "Rest." },
      saliency: [
        { concept_id: "C_FEVER", score: 0.61203947, level: "important" },
      ],
      highlights: [
        {
          section: "subjective", start: 0, end: 5, surface: "Fever",
          concept_id: "C_FEVER", category: "symptom",
          score: 0.61203947, level: "important",
        },
      ],
    },
  ],
  guideline_hits: [
    {
      community_id: 3,
      score: 0.7123456789,
      sem: 0.81,
      overlap: 0.48,
      summary: "Amoxicillin is indicated for pneumonia of moderate severity.",
      matched_concepts: [{ concept_id: "C_PNA", category: "diagnosis" }],
      support: [
        {
          unit_id: "nice-resp-07:0000",
          doc_id: "nice-resp-07",
          authority: "NICE",
          section_path: ["Antibiotics", "First line"],
          char_start: 0,
          char_end: 112,
          text: "Amoxicillin is indicated for pneumonia of low and moderate severity.",
        },
      ],
      relations: [
        {
          edge_id: "C_AMOX|indication|C_PNA",
          src: "C_AMOX",
          dst: "C_PNA",
          relation: "indication",
          qualifiers: {},
          units: [],
        },
      ],
    },
  ],
};

export const QA_FIXTURE: QaPayload = {
  answer: "Give amoxicillin [G-1]; the closest prior case [P-1] recovered fully.",
  prompt_echo: "…",
  citations: [
    { marker: "P-1", kind: "patient", ref: { case_id: "case0042" } },
    { marker: "G-1", kind: "guideline", ref: { community_id: 3, unit_ids: ["nice-resp-07:0000"] } },
  ],
};
