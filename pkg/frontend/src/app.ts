/** Page assembly and event wiring.
 *
 * All panel data derives from the most recent /retrieve response; the UI
 * holds no scores of its own. Toggle checkboxes are the single source of
 * truth for the booleans sent with every /retrieve and /qa call. Only one
 * retrieval or QA request is in flight per session: starting a new one
 * aborts the previous (latest wins).
 */

import { ApiClient, ApiError } from "./api.js";
import type { RetrievePayload, Toggles } from "./api.js";
import {
  renderAnswer,
  renderGuidelineHits,
  renderPatientHits,
  renderProvenance,
} from "./render.js";

export interface AppHandles {
  caseInput: HTMLTextAreaElement;
  lockButton: HTMLButtonElement;
  lockStatus: HTMLElement;
  lockError: HTMLElement;
  togglePatients: HTMLInputElement;
  toggleGuidelines: HTMLInputElement;
  retrieveButton: HTMLButtonElement;
  patientPanel: HTMLElement;
  guidelinePanel: HTMLElement;
  provenancePanel: HTMLElement;
  questionInput: HTMLInputElement;
  askButton: HTMLButtonElement;
  answers: HTMLElement;
  state: AppState;
}

export interface AppState {
  sessionId: string | null;
  lastEvidence: RetrievePayload | null;
  lastError: string | null;
}

const LAYOUT = `
  <header class="top">
    <h1>caseguide</h1>
    <p class="tagline">dual-evidence clinical retrieval</p>
  </header>
  <main>
    <section class="panel" id="case-panel">
      <h2>Patient case</h2>
      <textarea id="case-input" rows="7"
        placeholder="S: ...&#10;O: ...&#10;A: ...&#10;P:"></textarea>
      <div class="row">
        <button id="lock-button" type="button">Lock case</button>
        <button id="edit-button" type="button" hidden>Edit case</button>
        <span id="lock-status" class="status"></span>
      </div>
      <div id="lock-error" class="error" role="alert"></div>
    </section>
    <section class="panel" id="controls-panel">
      <h2>Evidence sources</h2>
      <label><input type="checkbox" id="toggle-patients" checked>
        similar patients</label>
      <label><input type="checkbox" id="toggle-guidelines" checked>
        guideline evidence</label>
      <button id="retrieve-button" type="button" disabled>Retrieve evidence</button>
    </section>
    <section class="panel" id="patients-panel">
      <h2>Similar patients</h2>
      <div id="patient-hits"></div>
    </section>
    <section class="panel" id="guidelines-panel">
      <h2>Guideline evidence</h2>
      <div id="guideline-hits"></div>
      <div id="provenance-view"></div>
    </section>
    <section class="panel" id="qa-panel">
      <h2>Ask</h2>
      <div class="row">
        <input id="question-input" type="text"
          placeholder="Ask about the locked case">
        <button id="ask-button" type="button" disabled>Ask</button>
      </div>
      <div id="answers"></div>
    </section>
  </main>
`;

function grab<T extends HTMLElement>(root: ParentNode, id: string): T {
  const node = root.querySelector(`#${id}`);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

export function createApp(root: HTMLElement, api: ApiClient): AppHandles {
  root.innerHTML = LAYOUT;
  const handles: AppHandles = {
    caseInput: grab(root, "case-input"),
    lockButton: grab(root, "lock-button"),
    lockStatus: grab(root, "lock-status"),
    lockError: grab(root, "lock-error"),
    togglePatients: grab(root, "toggle-patients"),
    toggleGuidelines: grab(root, "toggle-guidelines"),
    retrieveButton: grab(root, "retrieve-button"),
    patientPanel: grab(root, "patient-hits"),
    guidelinePanel: grab(root, "guideline-hits"),
    provenancePanel: grab(root, "provenance-view"),
    questionInput: grab(root, "question-input"),
    askButton: grab(root, "ask-button"),
    answers: grab(root, "answers"),
    state: { sessionId: null, lastEvidence: null, lastError: null },
  };
  const { state } = handles;

  let inflight: AbortController | null = null;
  const beginRequest = (): AbortSignal => {
    inflight?.abort();
    inflight = new AbortController();
    return inflight.signal;
  };

  const currentToggles = (): Toggles => ({
    use_patients: handles.togglePatients.checked,
    use_guidelines: handles.toggleGuidelines.checked,
  });

  const showError = (target: HTMLElement, error: unknown): void => {
    if (error instanceof DOMException && error.name === "AbortError") return;
    const message =
      error instanceof ApiError
        ? `${error.code}: ${error.message}`
        : String(error);
    target.textContent = message;
    state.lastError = message;
  };

  const showProvenance = (unitId: string): void => {
    api
      .provenance(unitId)
      .then((payload) => renderProvenance(handles.provenancePanel, unitId, payload))
      .catch((error) => showError(handles.lockError, error));
  };

  const runRetrieve = (): Promise<void> => {
    if (!state.sessionId) return Promise.resolve();
    const signal = beginRequest();
    return api
      .retrieve(state.sessionId, currentToggles(), signal)
      .then((payload) => {
        state.lastEvidence = payload;
        renderPatientHits(handles.patientPanel, payload.patient_hits);
        renderGuidelineHits(
          handles.guidelinePanel, payload.guideline_hits, showProvenance,
        );
      })
      .catch((error) => showError(handles.lockError, error));
  };

  const editButton = grab<HTMLButtonElement>(root, "edit-button");
  handles.lockButton.addEventListener("click", () => {
    handles.lockError.textContent = "";
    api
      .lockCase(handles.caseInput.value)
      .then((sessionId) => {
        state.sessionId = sessionId;
        handles.caseInput.disabled = true;
        editButton.hidden = false;
        handles.lockButton.textContent = "Re-lock (new session)";
        handles.lockStatus.textContent = `locked (session ${sessionId.slice(0, 8)})`;
        handles.retrieveButton.disabled = false;
        handles.askButton.disabled = false;
        return runRetrieve();
      })
      .catch((error) => showError(handles.lockError, error));
  });

  editButton.addEventListener("click", () => {
    // Unlocks the textarea; retrieval stays tied to the old session until
    // the edited case is locked again.
    handles.caseInput.disabled = false;
    handles.lockStatus.textContent = "editing (lock again to apply)";
  });

  handles.retrieveButton.addEventListener("click", () => {
    void runRetrieve();
  });

  handles.askButton.addEventListener("click", () => {
    if (!state.sessionId) return;
    const question = handles.questionInput.value.trim();
    if (!question) return;
    const signal = beginRequest();
    api
      .qa(state.sessionId, { question, ...currentToggles() }, signal)
      .then((payload) => {
        renderAnswer(handles.answers, question, payload.answer, payload.citations);
      })
      .catch((error) => showError(handles.lockError, error));
  });

  return handles;
}
