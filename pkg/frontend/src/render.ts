/** DOM renderers for the evidence panels and the QA transcript.
 *
 * These functions never compute or reformat scores: every number shown
 * is String(value) of the API payload, so what the user reads is exactly
 * what the service returned. Saliency levels map to fixed classes,
 * level-important (yellow) and level-highly_important (red).
 */

import type {
  Citation,
  GuidelineHit,
  HighlightSpan,
  PatientHit,
  ProvenancePayload,
} from "./api.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function levelClass(level: string): string {
  return `level-${level}`;
}

const SECTION_LABELS: Record<string, string> = {
  s: "S",
  o: "O",
  a: "A",
  p: "P",
};

const SECTION_NAMES: Record<string, string> = {
  s: "subjective",
  o: "objective",
  a: "assessment",
  p: "plan",
};

/** Render one SOAP section with saliency marks over the highlight spans. */
function renderSection(
  sectionKey: string,
  text: string,
  highlights: HighlightSpan[],
  markPrefix: string,
): HTMLElement {
  const row = el("div", "case-section");
  row.appendChild(el("span", "section-label", SECTION_LABELS[sectionKey] ?? sectionKey));
  const body = el("span", "section-text");
  const spans = highlights
    .filter((h) => h.section === SECTION_NAMES[sectionKey] && h.level !== "none")
    .sort((a, b) => a.start - b.start);
  let cursor = 0;
  for (const span of spans) {
    if (span.start < cursor) continue; // spans are non-overlapping by contract
    body.appendChild(document.createTextNode(text.slice(cursor, span.start)));
    const mark = el("mark", `highlight ${levelClass(span.level)}`);
    mark.textContent = text.slice(span.start, span.end);
    mark.id = `${markPrefix}-${span.concept_id}`;
    mark.dataset.concept = span.concept_id;
    body.appendChild(mark);
    cursor = span.end;
  }
  body.appendChild(document.createTextNode(text.slice(cursor)));
  row.appendChild(body);
  return row;
}

export function renderPatientHits(
  container: HTMLElement,
  hits: PatientHit[],
): void {
  container.replaceChildren();
  if (hits.length === 0) {
    container.appendChild(el("p", "empty-state", "No similar patients retrieved."));
    return;
  }
  hits.forEach((hit, i) => {
    const n = i + 1;
    const card = el("article", "card patient-card");
    card.id = `panel-P-${n}`;

    const header = el("header", "card-header");
    header.appendChild(el("span", "marker", `[P-${n}]`));
    header.appendChild(el("span", "case-id", hit.case_id));
    const scores = el("span", "scores");
    scores.appendChild(el("span", "score score-hybrid", `hybrid=${String(hit.hybrid)}`));
    scores.appendChild(el("span", "score score-kw", `kw=${String(hit.kw)}`));
    scores.appendChild(el("span", "score score-sem", `sem=${String(hit.sem)}`));
    header.appendChild(scores);
    card.appendChild(header);

    const chips = el("div", "chips");
    for (const entry of hit.saliency) {
      const chip = el(
        "button",
        `chip ${levelClass(entry.level)}`,
        `${entry.concept_id} ${String(entry.score)}`,
      );
      chip.type = "button";
      chip.dataset.concept = entry.concept_id;
      chip.dataset.level = entry.level;
      chip.addEventListener("click", () => {
        const mark = document.getElementById(`hl-P${n}-${entry.concept_id}`);
        mark?.scrollIntoView({ block: "center" });
        mark?.classList.add("flash");
      });
      chips.appendChild(chip);
    }
    card.appendChild(chips);

    const sections = el("div", "case-sections");
    for (const key of ["s", "o", "a", "p"] as const) {
      sections.appendChild(
        renderSection(key, hit.sections[key], hit.highlights, `hl-P${n}`),
      );
    }
    card.appendChild(sections);
    container.appendChild(card);
  });
}

export function renderGuidelineHits(
  container: HTMLElement,
  hits: GuidelineHit[],
  onUnitClick: (unitId: string) => void,
): void {
  container.replaceChildren();
  if (hits.length === 0) {
    container.appendChild(el("p", "empty-state", "No guideline evidence retrieved."));
    return;
  }
  hits.forEach((hit, i) => {
    const n = i + 1;
    const card = el("article", "card guideline-card");
    card.id = `panel-G-${n}`;

    const header = el("header", "card-header");
    header.appendChild(el("span", "marker", `[G-${n}]`));
    header.appendChild(el("span", "community-id", `community ${hit.community_id}`));
    const authorities = [...new Set(hit.support.map((u) => u.authority))];
    for (const authority of authorities) {
      header.appendChild(el("span", `badge badge-${authority}`, authority));
    }
    header.appendChild(el("span", "score", `score=${String(hit.score)}`));
    card.appendChild(header);

    card.appendChild(el("p", "summary", hit.summary));

    if (hit.matched_concepts.length > 0) {
      const matched = el("div", "matched");
      matched.appendChild(el("span", "matched-label", "matched:"));
      for (const concept of hit.matched_concepts) {
        matched.appendChild(el("span", "chip chip-matched", concept.concept_id));
      }
      card.appendChild(matched);
    }

    const units = el("ul", "support-units");
    for (const unit of hit.support) {
      const item = el("li");
      const link = el("button", "unit-link", unit.unit_id);
      link.type = "button";
      link.dataset.unitId = unit.unit_id;
      link.addEventListener("click", () => onUnitClick(unit.unit_id));
      item.appendChild(link);
      item.appendChild(el("span", "unit-text", ` ${unit.text.slice(0, 160)}`));
      units.appendChild(item);
    }
    card.appendChild(units);

    if (hit.relations.length > 0) {
      const relations = el("ul", "relations");
      for (const finding of hit.relations) {
        const qualifiers = Object.entries(finding.qualifiers)
          .map(([key, value]) => `${key}: ${value}`)
          .join(", ");
        relations.appendChild(el(
          "li",
          `relation relation-${finding.relation}`,
          `${finding.src} → ${finding.relation} → ${finding.dst}` +
            (qualifiers ? ` (${qualifiers})` : ""),
        ));
      }
      card.appendChild(relations);
    }
    container.appendChild(card);
  });
}

export function renderProvenance(
  container: HTMLElement,
  unitId: string,
  payload: ProvenancePayload,
): void {
  container.replaceChildren();
  const box = el("div", "provenance");
  box.appendChild(el("h3", undefined, `Source of ${unitId}`));
  box.appendChild(el("p", "provenance-doc", `document: ${payload.doc_id}`));
  box.appendChild(el(
    "p",
    "provenance-path",
    `section: ${payload.section_path.join(" > ")}`,
  ));
  box.appendChild(el("blockquote", "provenance-text", payload.text));
  container.appendChild(box);
}

/** Render an answer, turning [P-n]/[G-n] markers into chips that jump to
 * the matching evidence card. */
export function renderAnswer(
  container: HTMLElement,
  question: string,
  answer: string,
  citations: Citation[],
): void {
  const entry = el("div", "qa-entry");
  entry.appendChild(el("p", "qa-question", question));
  const body = el("p", "qa-answer");
  const markerPattern = /\[([PG])-(\d+)\]/g;
  let cursor = 0;
  for (const match of answer.matchAll(markerPattern)) {
    const index = match.index ?? 0;
    body.appendChild(document.createTextNode(answer.slice(cursor, index)));
    const marker = `${match[1]}-${match[2]}`;
    const chip = el("button", "chip citation-chip", `[${marker}]`);
    chip.type = "button";
    chip.dataset.marker = marker;
    chip.addEventListener("click", () => {
      document.getElementById(`panel-${marker}`)?.scrollIntoView({
        block: "start",
      });
    });
    body.appendChild(chip);
    cursor = index + match[0].length;
  }
  body.appendChild(document.createTextNode(answer.slice(cursor)));
  entry.appendChild(body);

  if (citations.length > 0) {
    const list = el("ul", "citations");
    for (const citation of citations) {
      list.appendChild(el(
        "li",
        "citation-row",
        `[${citation.marker}] ${citation.kind}: ${JSON.stringify(citation.ref)}`,
      ));
    }
    entry.appendChild(list);
  }
  container.prepend(entry);
}
