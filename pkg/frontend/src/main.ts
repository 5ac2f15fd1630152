import { StudyApi } from './api.js';
import { SessionController } from './session.js';

function reviewerFromQuery(): string | null {
  const params = new URLSearchParams(window.location.search);
  const reviewer = params.get('reviewer');
  return reviewer && reviewer.trim() ? reviewer.trim() : null;
}

function renderEnrollForm(root: HTMLElement): void {
  root.innerHTML = `
    <form class="enroll">
      <label for="reviewer-id">Reviewer id</label>
      <input id="reviewer-id" name="reviewer" autocomplete="off" required>
      <button type="submit">Start session</button>
    </form>
  `;
  root.querySelector('form')?.addEventListener('submit', (event) => {
    event.preventDefault();
    const input = root.querySelector<HTMLInputElement>('#reviewer-id');
    if (input && input.value.trim()) {
      const params = new URLSearchParams(window.location.search);
      params.set('reviewer', input.value.trim());
      window.location.search = params.toString();
    }
  });
}

window.addEventListener('load', () => {
  const root = document.getElementById('app');
  if (!root) {
    return;
  }
  const reviewer = reviewerFromQuery();
  if (!reviewer) {
    renderEnrollForm(root);
    return;
  }
  const controller = new SessionController(new StudyApi(''), reviewer, root);
  void controller.start();
});
